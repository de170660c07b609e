"""Regenerates usgs_like_pool.csv, the bundled spectral library fixture.

The fixture is synthetic. Each material is a smooth continuum (mineral-like
slope, vegetation red edge, or flat dark/bright surface) multiplied by a
handful of Gaussian absorption bands at positions typical of laboratory
reflectance libraries (Fe3+ near 0.9 um, OH/H2O near 1.4/1.9 um, Al-OH and
Mg-OH near 2.2/2.3 um, carbonate near 2.34 um). Band grid: 224 channels
evenly spaced over 0.4-2.5 um, matching AVIRIS-class sensors.

Usage: python3 make_pool.py > usgs_like_pool.csv
"""

import numpy as np

BANDS = 224
WAVELENGTHS = np.linspace(0.4, 2.5, BANDS)

ABSORPTIONS = {
    "fe3": (0.90, 0.10),
    "fe2": (1.05, 0.20),
    "oh14": (1.41, 0.03),
    "h2o19": (1.91, 0.05),
    "aloh": (2.20, 0.03),
    "mgoh": (2.31, 0.03),
    "co3": (2.34, 0.04),
    "chl": (0.67, 0.04),
    "cell": (2.10, 0.06),
    "h2o12": (1.20, 0.06),
}


def continuum(kind, rng):
    lam = (WAVELENGTHS - 0.4) / 2.1
    if kind == "mineral":
        base = rng.uniform(0.25, 0.55)
        slope = rng.uniform(0.05, 0.35)
        curve = rng.uniform(-0.25, 0.05)
        return base + slope * lam + curve * lam ** 2
    if kind == "vegetation":
        edge = 0.7 + rng.uniform(-0.02, 0.03)
        nir = rng.uniform(0.35, 0.6)
        vis = rng.uniform(0.04, 0.1)
        s = 1.0 / (1.0 + np.exp(-(WAVELENGTHS - edge) / 0.015))
        decay = 1.0 - rng.uniform(0.3, 0.6) * np.clip((WAVELENGTHS - 1.3) / 1.2, 0.0, 1.0)
        return vis + (nir - vis) * s * decay
    if kind == "soil":
        base = rng.uniform(0.08, 0.2)
        rise = rng.uniform(0.2, 0.4)
        knee = rng.uniform(0.15, 0.35)
        return base + rise * (1.0 - np.exp(-lam / knee))
    if kind == "dark":
        base = rng.uniform(0.03, 0.08)
        return base + rng.uniform(0.0, 0.06) * lam
    raise ValueError(kind)


def absorb(spectrum, features, rng):
    out = spectrum.copy()
    for name in features:
        center, width = ABSORPTIONS[name]
        center += rng.uniform(-0.015, 0.015)
        depth = rng.uniform(0.15, 0.6)
        out *= 1.0 - depth * np.exp(-0.5 * ((WAVELENGTHS - center) / width) ** 2)
    return out


MATERIALS = [
    ("kaolinite", "mineral", ["oh14", "h2o19", "aloh"]),
    ("montmorillonite", "mineral", ["oh14", "h2o19", "aloh", "h2o12"]),
    ("alunite", "mineral", ["oh14", "aloh", "h2o19"]),
    ("muscovite", "mineral", ["oh14", "aloh"]),
    ("calcite", "mineral", ["co3", "h2o19"]),
    ("dolomite", "mineral", ["co3", "fe2"]),
    ("hematite", "mineral", ["fe3", "fe2"]),
    ("goethite", "mineral", ["fe3", "h2o19"]),
    ("jarosite", "mineral", ["fe3", "oh14", "aloh"]),
    ("chlorite", "mineral", ["fe2", "mgoh", "oh14"]),
    ("talc", "mineral", ["mgoh", "oh14"]),
    ("gypsum", "mineral", ["h2o12", "oh14", "h2o19", "cell"]),
    ("olivine", "mineral", ["fe2"]),
    ("pyroxene", "mineral", ["fe3", "fe2", "h2o19"]),
    ("grass", "vegetation", ["chl", "h2o12", "oh14", "h2o19", "cell"]),
    ("conifer", "vegetation", ["chl", "h2o12", "h2o19"]),
    ("dry_grass", "soil", ["cell", "h2o19", "oh14"]),
    ("lichen", "vegetation", ["chl", "cell"]),
    ("sandy_soil", "soil", ["fe3", "h2o19", "aloh"]),
    ("clay_soil", "soil", ["oh14", "h2o19", "aloh", "fe3"]),
    ("asphalt", "dark", ["h2o19"]),
    ("basalt", "dark", ["fe2"]),
    ("concrete", "mineral", ["co3", "h2o19", "oh14"]),
    ("snow_dirty", "mineral", ["h2o12", "h2o19", "oh14", "fe2"]),
]


def main():
    rng = np.random.default_rng(20191029)
    columns = []
    for _, kind, features in MATERIALS:
        s = absorb(continuum(kind, rng), features, rng)
        columns.append(np.clip(s, 0.01, 0.95))
    labels = ["wavelength_um"] + [name for name, _, _ in MATERIALS]
    print(",".join(labels))
    for b in range(BANDS):
        row = [f"{WAVELENGTHS[b]:.6f}"] + [f"{c[b]:.6f}" for c in columns]
        print(",".join(row))


if __name__ == "__main__":
    main()
