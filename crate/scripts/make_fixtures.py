"""Builds the bundled region fixtures under crates/core/data.

The outlines are Voronoi cells around approximate region centroids, clipped
to a buffered hull. They share exact boundary vertices between neighbours,
which is what adjacency extraction needs, but they are NOT real boundaries.
Population figures are approximate and only meant for tests and demos.
"""
import csv
import json
import os

import shapely
from shapely.geometry import MultiPoint, Point, mapping

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data")

STATES = [
    ("01", "Aguascalientes", "AGS", -102.36, 21.93, 1312544),
    ("02", "Baja California", "BC", -115.10, 30.55, 3315766),
    ("03", "Baja California Sur", "BCS", -111.97, 25.85, 712029),
    ("04", "Campeche", "CAMP", -90.36, 18.84, 899931),
    ("05", "Coahuila", "COAH", -102.04, 27.30, 2954915),
    ("06", "Colima", "COL", -103.91, 19.14, 711235),
    ("07", "Chiapas", "CHIS", -92.46, 16.49, 5217908),
    ("08", "Chihuahua", "CHIH", -106.47, 28.81, 3376062),
    ("09", "Ciudad de Mexico", "CDMX", -99.13, 19.30, 8918653),
    ("10", "Durango", "DGO", -104.90, 24.93, 1754754),
    ("11", "Guanajuato", "GTO", -101.02, 20.92, 5853677),
    ("12", "Guerrero", "GRO", -99.90, 17.61, 3533251),
    ("13", "Hidalgo", "HGO", -98.89, 20.48, 2858359),
    ("14", "Jalisco", "JAL", -103.60, 20.57, 7844830),
    ("15", "Mexico", "MEX", -99.65, 19.35, 16187608),
    ("16", "Michoacan", "MICH", -101.88, 19.20, 4584471),
    ("17", "Morelos", "MOR", -99.07, 18.73, 1903811),
    ("18", "Nayarit", "NAY", -104.85, 21.84, 1181050),
    ("19", "Nuevo Leon", "NL", -99.99, 25.57, 5119504),
    ("20", "Oaxaca", "OAX", -96.42, 17.06, 3967889),
    ("21", "Puebla", "PUE", -97.88, 19.00, 6168883),
    ("22", "Queretaro", "QRO", -99.85, 20.86, 2038372),
    ("23", "Quintana Roo", "QROO", -88.12, 19.60, 1501562),
    ("24", "San Luis Potosi", "SLP", -100.43, 22.59, 2717820),
    ("25", "Sinaloa", "SIN", -107.49, 25.00, 2966321),
    ("26", "Sonora", "SON", -110.87, 29.67, 2850330),
    ("27", "Tabasco", "TAB", -92.62, 17.94, 2395272),
    ("28", "Tamaulipas", "TAMPS", -98.61, 24.29, 3441698),
    ("29", "Tlaxcala", "TLAX", -98.16, 19.43, 1272847),
    ("30", "Veracruz", "VER", -96.40, 19.35, 8112505),
    ("31", "Yucatan", "YUC", -89.08, 20.75, 2097175),
    ("32", "Zacatecas", "ZAC", -102.71, 23.29, 1579209),
]

CDMX = [
    ("09002", "Azcapotzalco", "AZC", -99.185, 19.487, 400161),
    ("09003", "Coyoacan", "COY", -99.162, 19.330, 608479),
    ("09004", "Cuajimalpa de Morelos", "CUJ", -99.292, 19.356, 199224),
    ("09005", "Gustavo A. Madero", "GAM", -99.111, 19.505, 1164477),
    ("09006", "Iztacalco", "IZC", -99.097, 19.396, 390348),
    ("09007", "Iztapalapa", "IZP", -99.057, 19.358, 1827868),
    ("09008", "La Magdalena Contreras", "MCO", -99.265, 19.300, 243886),
    ("09009", "Milpa Alta", "MIL", -99.023, 19.192, 137927),
    ("09010", "Alvaro Obregon", "AOB", -99.225, 19.358, 749982),
    ("09011", "Tlahuac", "TLH", -99.002, 19.285, 361593),
    ("09012", "Tlalpan", "TLP", -99.167, 19.200, 677104),
    ("09013", "Xochimilco", "XOC", -99.101, 19.257, 415933),
    ("09014", "Benito Juarez", "BJU", -99.163, 19.380, 417416),
    ("09015", "Cuauhtemoc", "CUH", -99.147, 19.433, 532553),
    ("09016", "Miguel Hidalgo", "MHI", -99.203, 19.427, 364439),
    ("09017", "Venustiano Carranza", "VCA", -99.091, 19.430, 427263),
]


def cells(rows, buffer):
    pts = [Point(lon, lat) for _, _, _, lon, lat, _ in rows]
    hull = MultiPoint(pts).convex_hull.buffer(buffer)
    vor = shapely.voronoi_polygons(MultiPoint(pts), extend_to=hull.envelope)
    out = []
    for (code, name, abbr, lon, lat, _), p in zip(rows, pts):
        cell = next(c for c in vor.geoms if c.contains(p))
        clipped = shapely.set_precision(cell.intersection(hull), 1e-6)
        out.append((code, name, abbr, clipped))
    return out


def write_geojson(path, rows, buffer):
    feats = []
    for code, name, abbr, geom in cells(rows, buffer):
        geom = shapely.geometry.polygon.orient(geom, 1.0)
        feats.append(
            {
                "type": "Feature",
                "properties": {"region_code": code, "name": name, "abbr": abbr},
                "geometry": mapping(geom),
            }
        )
    with open(path, "w") as f:
        json.dump({"type": "FeatureCollection", "features": feats}, f, indent=None)
        f.write("\n")


def write_table(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["region_code", "name", "abbr", "lon", "lat"])
        for code, name, abbr, lon, lat, _ in rows:
            w.writerow([code, name, abbr, lon, lat])


def write_population(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["region_code", "population"])
        for code, *_, pop in rows:
            w.writerow([code, pop])


if __name__ == "__main__":
    os.makedirs(OUT, exist_ok=True)
    write_geojson(os.path.join(OUT, "mx_states.geojson"), STATES, 1.5)
    write_geojson(os.path.join(OUT, "cdmx_municipalities.geojson"), CDMX, 0.03)
    write_table(os.path.join(OUT, "mx_states.csv"), STATES)
    write_table(os.path.join(OUT, "cdmx_municipalities.csv"), CDMX)
    write_population(os.path.join(OUT, "mx_state_population.csv"), STATES)
    write_population(os.path.join(OUT, "cdmx_population.csv"), CDMX)
