//! Spherical-earth geometry: a local equirectangular frame anchored at the
//! south-west corner of the area of interest, the square grid laid over it,
//! and great-circle distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

const M_PER_DEG: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

/// WGS-84 latitude/longitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Invalid(format!("coordinates out of range: ({lat}, {lon})")));
        }
        Ok(GeoPoint { lat, lon })
    }
}

/// Meters east (`x`) and north (`y`) of a frame origin.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        PlanarPoint { x, y }
    }

    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Equirectangular projection about a fixed origin and reference latitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    origin: GeoPoint,
    cos_ref: f64,
}

impl LocalFrame {
    pub fn new(origin: GeoPoint, ref_lat: f64) -> Self {
        LocalFrame {
            origin,
            cos_ref: ref_lat.to_radians().cos(),
        }
    }

    /// Frame whose reference latitude is the origin's own latitude.
    pub fn at(origin: GeoPoint) -> Self {
        Self::new(origin, origin.lat)
    }

    pub fn project(&self, p: GeoPoint) -> PlanarPoint {
        PlanarPoint {
            x: (p.lon - self.origin.lon) * self.cos_ref * M_PER_DEG,
            y: (p.lat - self.origin.lat) * M_PER_DEG,
        }
    }

    pub fn unproject(&self, p: PlanarPoint) -> GeoPoint {
        GeoPoint {
            lat: self.origin.lat + p.y / M_PER_DEG,
            lon: self.origin.lon + p.x / (M_PER_DEG * self.cos_ref),
        }
    }

    /// Planar centroid of `points`, mapped back to geographic coordinates.
    pub fn centroid<'a>(&self, points: impl IntoIterator<Item = &'a GeoPoint>) -> Option<GeoPoint> {
        let mut n = 0usize;
        let mut acc = PlanarPoint::default();
        for p in points {
            let q = self.project(*p);
            acc.x += q.x;
            acc.y += q.y;
            n += 1;
        }
        (n > 0).then(|| {
            self.unproject(PlanarPoint::new(acc.x / n as f64, acc.y / n as f64))
        })
    }
}

/// Rectangular area of interest, anchored at its south-west corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub origin: GeoPoint,
    pub width_m: f64,
    pub height_m: f64,
}

impl BoundingBox {
    pub fn new(origin: GeoPoint, width_m: f64, height_m: f64) -> Result<Self> {
        if !(width_m > 0.0 && height_m > 0.0 && width_m.is_finite() && height_m.is_finite()) {
            return Err(Error::Invalid(format!(
                "bounding box extent must be positive, got {width_m} x {height_m}"
            )));
        }
        Ok(BoundingBox {
            origin,
            width_m,
            height_m,
        })
    }

    /// Smallest box containing every point, padded by `margin_m` on each side.
    pub fn enclosing<'a>(
        points: impl IntoIterator<Item = &'a GeoPoint>,
        margin_m: f64,
    ) -> Result<Self> {
        let (mut lat0, mut lat1, mut lon0, mut lon1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in points {
            lat0 = lat0.min(p.lat);
            lat1 = lat1.max(p.lat);
            lon0 = lon0.min(p.lon);
            lon1 = lon1.max(p.lon);
        }
        if lat0 > lat1 {
            return Err(Error::Invalid("cannot derive a bounding box from no points".into()));
        }
        let mid = 0.5 * (lat0 + lat1);
        let frame = LocalFrame::new(GeoPoint { lat: lat0, lon: lon0 }, mid);
        let ne = frame.project(GeoPoint { lat: lat1, lon: lon1 });
        let sw = frame.unproject(PlanarPoint::new(-margin_m, -margin_m));
        BoundingBox::new(sw, ne.x + 2.0 * margin_m, ne.y + 2.0 * margin_m)
    }

    pub fn mid_lat(&self) -> f64 {
        self.origin.lat + 0.5 * self.height_m / M_PER_DEG
    }

    pub fn frame(&self) -> LocalFrame {
        LocalFrame::new(self.origin, self.mid_lat())
    }

    /// Whether a planar point (in this box's frame) lies in the closed box.
    pub fn contains_planar(&self, p: PlanarPoint) -> bool {
        (0.0..=self.width_m).contains(&p.x) && (0.0..=self.height_m).contains(&p.y)
    }
}

/// Square grid of `cell_len_m` cells covering a bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpecRepr", into = "GridSpecRepr")]
pub struct GridSpec {
    bbox: BoundingBox,
    cell_len_m: f64,
    n_cols: usize,
    n_rows: usize,
}

#[derive(Serialize, Deserialize)]
struct GridSpecRepr {
    origin: GeoPoint,
    width_m: f64,
    height_m: f64,
    cell_len_m: f64,
}

impl TryFrom<GridSpecRepr> for GridSpec {
    type Error = Error;

    fn try_from(r: GridSpecRepr) -> Result<Self> {
        GridSpec::new(BoundingBox::new(r.origin, r.width_m, r.height_m)?, r.cell_len_m)
    }
}

impl From<GridSpec> for GridSpecRepr {
    fn from(g: GridSpec) -> Self {
        GridSpecRepr {
            origin: g.bbox.origin,
            width_m: g.bbox.width_m,
            height_m: g.bbox.height_m,
            cell_len_m: g.cell_len_m,
        }
    }
}

impl GridSpec {
    pub fn new(bbox: BoundingBox, cell_len_m: f64) -> Result<Self> {
        if !(cell_len_m > 0.0 && cell_len_m.is_finite()) {
            return Err(Error::Invalid(format!("cell length must be positive, got {cell_len_m}")));
        }
        let n_cols = ((bbox.width_m / cell_len_m).ceil() as usize).max(1);
        let n_rows = ((bbox.height_m / cell_len_m).ceil() as usize).max(1);
        Ok(GridSpec {
            bbox,
            cell_len_m,
            n_cols,
            n_rows,
        })
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn origin(&self) -> GeoPoint {
        self.bbox.origin
    }

    pub fn cell_len_m(&self) -> f64 {
        self.cell_len_m
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Number of states `N = n_cols * n_rows`.
    pub fn n_cells(&self) -> usize {
        self.n_cols * self.n_rows
    }

    pub fn frame(&self) -> LocalFrame {
        self.bbox.frame()
    }

    pub fn project(&self, p: GeoPoint) -> PlanarPoint {
        self.frame().project(p)
    }

    pub fn unproject(&self, p: PlanarPoint) -> GeoPoint {
        self.frame().unproject(p)
    }

    /// Cell containing `p`; points outside the grid clamp to the nearest edge cell.
    pub fn cell_of(&self, p: GeoPoint) -> CellIndex {
        self.cell_of_planar(self.project(p))
    }

    pub fn cell_of_planar(&self, p: PlanarPoint) -> CellIndex {
        let clamp = |v: f64, n: usize| -> usize {
            let i = (v / self.cell_len_m).floor();
            if i.is_nan() || i < 0.0 {
                0
            } else {
                (i as usize).min(n - 1)
            }
        };
        CellIndex {
            col: clamp(p.x, self.n_cols),
            row: clamp(p.y, self.n_rows),
        }
    }

    /// Cell containing `p`, or `None` when `p` falls outside the bounding box.
    pub fn cell_of_strict(&self, p: GeoPoint) -> Option<CellIndex> {
        let q = self.project(p);
        self.bbox.contains_planar(q).then(|| self.cell_of_planar(q))
    }

    pub fn cell_center_planar(&self, c: CellIndex) -> Result<PlanarPoint> {
        self.check(c)?;
        Ok(PlanarPoint::new(
            (c.col as f64 + 0.5) * self.cell_len_m,
            (c.row as f64 + 0.5) * self.cell_len_m,
        ))
    }

    pub fn cell_center(&self, c: CellIndex) -> Result<GeoPoint> {
        Ok(self.unproject(self.cell_center_planar(c)?))
    }

    pub fn check(&self, c: CellIndex) -> Result<()> {
        if c.col >= self.n_cols || c.row >= self.n_rows {
            return Err(Error::OutOfBounds {
                col: c.col,
                row: c.row,
                n_cols: self.n_cols,
                n_rows: self.n_rows,
            });
        }
        Ok(())
    }

    pub fn flat(&self, c: CellIndex) -> usize {
        c.row * self.n_cols + c.col
    }

    pub fn cell(&self, flat: usize) -> CellIndex {
        CellIndex {
            col: flat % self.n_cols,
            row: flat / self.n_cols,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub col: usize,
    pub row: usize,
}

impl CellIndex {
    pub fn new(col: usize, row: usize) -> Self {
        CellIndex { col, row }
    }
}

/// Great-circle distance in meters.
pub fn haversine(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = p2 - p1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(cell: f64) -> GridSpec {
        let origin = GeoPoint::new(30.07, 31.01).unwrap();
        GridSpec::new(BoundingBox::new(origin, 2000.0, 1000.0).unwrap(), cell).unwrap()
    }

    #[test]
    fn origin_projects_to_zero() {
        let g = spec(400.0);
        let p = g.project(g.origin());
        assert_eq!(p, PlanarPoint::new(0.0, 0.0));
    }

    #[test]
    fn north_offset() {
        let g = spec(400.0);
        let o = g.origin();
        let p = g.project(GeoPoint::new(o.lat + 0.001, o.lon).unwrap());
        assert!((p.y - 111.19).abs() < 0.01, "{}", p.y);
        assert_eq!(p.x, 0.0);
    }

    #[test]
    fn one_degree_of_longitude_at_equator() {
        let d = haversine(GeoPoint::new(0.0, 0.0).unwrap(), GeoPoint::new(0.0, 1.0).unwrap());
        assert!((d - 111_195.0).abs() < 1.0, "{d}");
    }

    #[test]
    fn grid_dimensions() {
        let g = spec(400.0);
        assert_eq!((g.n_cols(), g.n_rows(), g.n_cells()), (5, 3, 15));
        let g = spec(1600.0);
        assert_eq!((g.n_cols(), g.n_rows()), (2, 1));
        assert!(GridSpec::new(*g.bbox(), 0.0).is_err());
    }

    #[test]
    fn cell_boundaries() {
        let g = spec(400.0);
        assert_eq!(g.cell_of_planar(PlanarPoint::new(0.0, 0.0)), CellIndex::new(0, 0));
        assert_eq!(g.cell_of_planar(PlanarPoint::new(399.9, 400.0)), CellIndex::new(0, 1));
        assert_eq!(g.cell_of_planar(PlanarPoint::new(-5.0, 10.0)), CellIndex::new(0, 0));
        assert_eq!(g.cell_of_planar(PlanarPoint::new(1e6, 1e6)), CellIndex::new(4, 2));
    }

    #[test]
    fn strict_lookup_rejects_outside() {
        let g = spec(400.0);
        assert!(g.cell_of_strict(g.unproject(PlanarPoint::new(-5.0, 10.0))).is_none());
        assert_eq!(
            g.cell_of_strict(g.unproject(PlanarPoint::new(450.0, 10.0))),
            Some(CellIndex::new(1, 0))
        );
    }

    #[test]
    fn cell_center_first_cell() {
        let g = spec(400.0);
        let c = g.cell_center(CellIndex::new(0, 0)).unwrap();
        assert_eq!(c, g.unproject(PlanarPoint::new(200.0, 200.0)));
        assert!(matches!(
            g.cell_center(CellIndex::new(5, 0)),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn every_center_maps_back_to_its_cell() {
        for len in [100.0, 250.0, 400.0, 777.0, 1600.0] {
            let g = spec(len);
            for flat in 0..g.n_cells() {
                let c = g.cell(flat);
                assert_eq!(g.flat(c), flat);
                assert_eq!(g.cell_of(g.cell_center(c).unwrap()), c);
            }
        }
    }

    #[test]
    fn invalid_coordinates_rejected() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -181.0).is_err());
    }

    #[test]
    fn enclosing_box_contains_points() {
        let pts = [
            GeoPoint::new(30.0, 31.0).unwrap(),
            GeoPoint::new(30.01, 31.02).unwrap(),
        ];
        let b = BoundingBox::enclosing(pts.iter(), 10.0).unwrap();
        for p in &pts {
            assert!(b.contains_planar(b.frame().project(*p)));
        }
    }

    proptest! {
        #[test]
        fn round_trip_projection(dx in -5000.0..5000.0f64, dy in -5000.0..5000.0f64) {
            let g = spec(400.0);
            let p = g.unproject(PlanarPoint::new(dx, dy));
            let q = g.unproject(g.project(p));
            prop_assert!((p.lat - q.lat).abs() < 1e-9 && (p.lon - q.lon).abs() < 1e-9);
        }

        #[test]
        fn haversine_symmetric_nonnegative(a in 29.9..30.2f64, b in 30.9..31.2f64,
                                           c in 29.9..30.2f64, d in 30.9..31.2f64) {
            let p = GeoPoint::new(a, b).unwrap();
            let q = GeoPoint::new(c, d).unwrap();
            prop_assert!(haversine(p, q) >= 0.0);
            prop_assert_eq!(haversine(p, q), haversine(q, p));
            prop_assert_eq!(haversine(p, p), 0.0);
        }

        #[test]
        fn triangle_inequality(pts in proptest::collection::vec((-60.0..60.0f64, -170.0..170.0f64), 3)) {
            let p: Vec<GeoPoint> = pts.iter().map(|&(a, b)| GeoPoint::new(a, b).unwrap()).collect();
            let (ab, bc, ac) = (haversine(p[0], p[1]), haversine(p[1], p[2]), haversine(p[0], p[2]));
            prop_assert!(ac <= (ab + bc) * (1.0 + 1e-6) + 1e-9);
        }

        #[test]
        fn planar_distance_matches_great_circle(x1 in 0.0..10_000.0f64, y1 in 0.0..10_000.0f64,
                                                x2 in 0.0..10_000.0f64, y2 in 0.0..10_000.0f64) {
            let origin = GeoPoint::new(30.07, 31.01).unwrap();
            let b = BoundingBox::new(origin, 10_000.0, 10_000.0).unwrap();
            let (p, q) = (PlanarPoint::new(x1, y1), PlanarPoint::new(x2, y2));
            let h = haversine(b.frame().unproject(p), b.frame().unproject(q));
            prop_assume!(h > 1.0);
            prop_assert!((h - p.distance(&q)).abs() / h < 0.01);
        }

        #[test]
        fn center_is_within_half_diagonal(col in 0usize..5, row in 0usize..3,
                                          fx in 0.0..1.0f64, fy in 0.0..1.0f64) {
            let g = spec(400.0);
            let c = CellIndex::new(col, row);
            let p = g.unproject(PlanarPoint::new((col as f64 + fx) * 400.0, (row as f64 + fy) * 400.0));
            let d = haversine(p, g.cell_center(c).unwrap());
            prop_assert!(d <= 400.0 * std::f64::consts::SQRT_2 / 2.0 + 1.0);
        }
    }
}
