"""Regenerate crates/core/src/forward/filters.rs from the empymod filter library.

Usage: python3 tools/export_filters.py > crates/core/src/forward/filters.rs
"""
from empymod import filters

def arr(name, values):
    body = "\n".join(f"    {v!r}," for v in values)
    return f"pub const {name}: [f64; {len(values)}] = [\n{body}\n];\n"

hankel = filters.Hankel().key_201_2012
fourier = filters.Fourier().key_81_2009

print("// Generated by tools/export_filters.py. Do not edit by hand.")
print("//")
print("// Hankel: Key (2012) 201-point J0/J1 filter.")
print("// Fourier: Key (2009) 81-point sine/cosine filter.")
print("// Values taken from the empymod filter library (Apache-2.0).")
print()
print("/// Hankel filter abscissae (dimensionless, multiply by 1/r).")
print(arr("HANKEL_BASE", list(map(float, hankel.base))))
print("/// Hankel filter weights for J0.")
print(arr("HANKEL_J0", list(map(float, hankel.j0))))
print("/// Hankel filter weights for J1.")
print(arr("HANKEL_J1", list(map(float, hankel.j1))))
print("/// Sine/cosine filter abscissae (dimensionless, multiply by 1/t).")
print(arr("FOURIER_BASE", list(map(float, fourier.base))))
print("/// Sine transform weights.")
print(arr("FOURIER_SIN", list(map(float, fourier.sin))))
print("/// Cosine transform weights.")
print(arr("FOURIER_COS", list(map(float, fourier.cos))), end="")
