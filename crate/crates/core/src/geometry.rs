//! Level-set surfaces and the projection quadrature built on them.
//!
//! Quadrature nodes are the intersections of the surface with coordinate
//! lines through an origin-registered lattice of spacing `h`. A smooth
//! partition of unity on the unit sphere assigns each node to the axis it is
//! best resolved along, which yields a rule of very high order for smooth
//! integrands on closed surfaces.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{check_len, check_positive, Error, Result};
use crate::vec3::Vec3;

/// Partition angle in degrees.
pub const PARTITION_ANGLE_DEG: f64 = 70.0;

const BISECTION_WIDTH: f64 = 1e-14;
const MIN_GRADIENT: f64 = 1e-12;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Aabb {
    pub fn diameter(&self) -> f64 {
        (self.hi - self.lo).norm()
    }
}

/// Signature of a user-supplied level set: returns the value and gradient.
pub type LevelSetFn = dyn Fn(Vec3) -> (f64, Vec3) + Send + Sync;

#[derive(Clone)]
pub enum SurfaceKind {
    Sphere { radius: f64 },
    Ellipsoid { a: f64, b: f64, c: f64 },
    /// Union of four Gaussian blobs. The level function is positive inside,
    /// so the outward normal is taken against the gradient.
    Molecule { centers: [Vec3; 4], radius: f64, level: f64 },
    Custom { name: String, phi: Arc<LevelSetFn>, outward_sign: f64 },
}

impl std::fmt::Debug for SurfaceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Sphere { radius } => write!(f, "Sphere {{ radius: {radius} }}"),
            Self::Ellipsoid { a, b, c } => write!(f, "Ellipsoid {{ a: {a}, b: {b}, c: {c} }}"),
            Self::Molecule { radius, level, .. } => {
                write!(f, "Molecule {{ radius: {radius}, level: {level} }}")
            }
            Self::Custom { name, .. } => write!(f, "Custom {{ name: {name:?} }}"),
        }
    }
}

/// A closed surface given as the zero set of a smooth function.
#[derive(Debug, Clone)]
pub struct LevelSetSurface {
    pub kind: SurfaceKind,
    pub bbox: Aabb,
}

/// Centers of the four-atom molecule: the vertices of a regular tetrahedron
/// with unit edge length.
pub fn molecule_centers() -> [Vec3; 4] {
    let s3 = 3f64.sqrt();
    let s6 = 6f64.sqrt();
    [
        Vec3::new(s3 / 3.0, 0.0, -s6 / 12.0),
        Vec3::new(-s3 / 6.0, 0.5, -s6 / 12.0),
        Vec3::new(-s3 / 6.0, -0.5, -s6 / 12.0),
        Vec3::new(0.0, 0.0, s6 / 4.0),
    ]
}

impl LevelSetSurface {
    pub fn sphere(radius: f64) -> Result<Self> {
        check_positive("sphere radius", radius)?;
        let e = Vec3::new(radius, radius, radius);
        Ok(Self { kind: SurfaceKind::Sphere { radius }, bbox: Aabb { lo: -e, hi: e } })
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self> {
        check_positive("semiaxis a", a)?;
        check_positive("semiaxis b", b)?;
        check_positive("semiaxis c", c)?;
        let e = Vec3::new(a, b, c);
        Ok(Self { kind: SurfaceKind::Ellipsoid { a, b, c }, bbox: Aabb { lo: -e, hi: e } })
    }

    /// The four-atom molecule with r = 0.5 and level c = 0.6.
    pub fn molecule() -> Self {
        Self::molecule_with(molecule_centers(), 0.5, 0.6).expect("built-in molecule is valid")
    }

    pub fn molecule_with(centers: [Vec3; 4], radius: f64, level: f64) -> Result<Self> {
        check_positive("molecule radius", radius)?;
        check_positive("molecule level", level)?;
        let e = Vec3::new(2.0, 2.0, 2.0);
        Ok(Self {
            kind: SurfaceKind::Molecule { centers, radius, level },
            bbox: Aabb { lo: -e, hi: e },
        })
    }

    /// A user-defined surface. `outward_sign` is +1 when `phi` is positive
    /// outside the body and -1 when it is positive inside.
    pub fn custom(name: impl Into<String>, phi: Arc<LevelSetFn>, outward_sign: f64, bbox: Aabb) -> Self {
        Self {
            kind: SurfaceKind::Custom { name: name.into(), phi, outward_sign: outward_sign.signum() },
            bbox,
        }
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            SurfaceKind::Sphere { .. } => "sphere",
            SurfaceKind::Ellipsoid { .. } => "ellipsoid",
            SurfaceKind::Molecule { .. } => "molecule",
            SurfaceKind::Custom { name, .. } => name,
        }
    }

    /// Level-set value and gradient.
    pub fn eval(&self, x: Vec3) -> (f64, Vec3) {
        match &self.kind {
            SurfaceKind::Sphere { radius } => (x.norm_sq() - radius * radius, 2.0 * x),
            SurfaceKind::Ellipsoid { a, b, c } => {
                let (a2, b2, c2) = (a * a, b * b, c * c);
                let v = x.x * x.x / a2 + x.y * x.y / b2 + x.z * x.z / c2 - 1.0;
                (v, Vec3::new(2.0 * x.x / a2, 2.0 * x.y / b2, 2.0 * x.z / c2))
            }
            SurfaceKind::Molecule { centers, radius, level } => {
                let r2 = radius * radius;
                let mut v = -level;
                let mut g = Vec3::ZERO;
                for c in centers {
                    let d = x - *c;
                    let e = (-d.norm_sq() / r2).exp();
                    v += e;
                    g += d * (-2.0 * e / r2);
                }
                (v, g)
            }
            SurfaceKind::Custom { phi, .. } => phi(x),
        }
    }

    /// +1 when the level function is positive outside the body.
    pub fn outward_sign(&self) -> f64 {
        match &self.kind {
            SurfaceKind::Molecule { .. } => -1.0,
            SurfaceKind::Custom { outward_sign, .. } => *outward_sign,
            _ => 1.0,
        }
    }

    /// Outward unit normal at a point on (or near) the surface.
    pub fn unit_normal(&self, x: Vec3) -> Result<Vec3> {
        let (_, g) = self.eval(x);
        let gn = g.norm();
        if !(gn >= MIN_GRADIENT) {
            return Err(Error::DegenerateGradient { x: x.x, y: x.y, z: x.z });
        }
        Ok(g * (self.outward_sign() / gn))
    }

    /// Closed-form surface area where one exists.
    pub fn exact_area(&self) -> Option<f64> {
        match self.kind {
            SurfaceKind::Sphere { radius } => Some(4.0 * std::f64::consts::PI * radius * radius),
            _ => None,
        }
    }
}

/// Free-function form of [`LevelSetSurface::eval`].
pub fn level_set_eval(surface: &LevelSetSurface, x: Vec3) -> (f64, Vec3) {
    surface.eval(x)
}

/// Free-function form of [`LevelSetSurface::unit_normal`].
pub fn unit_normal(surface: &LevelSetSurface, x: Vec3) -> Result<Vec3> {
    surface.unit_normal(x)
}

fn bump(c: f64, cos_t: f64, sin2_t: f64) -> f64 {
    if c.abs() <= cos_t {
        return 0.0;
    }
    let r = (1.0 - c * c) / sin2_t;
    let r2 = r * r;
    if r2 >= 1.0 {
        0.0
    } else {
        (r2 / (r2 - 1.0)).exp()
    }
}

/// All three partition-of-unity weights for a unit vector.
pub fn partition_weights(n: Vec3) -> [f64; 3] {
    let t = PARTITION_ANGLE_DEG.to_radians();
    let (cos_t, sin2_t) = (t.cos(), t.sin().powi(2));
    let b = [bump(n.x, cos_t, sin2_t), bump(n.y, cos_t, sin2_t), bump(n.z, cos_t, sin2_t)];
    let s = b[0] + b[1] + b[2];
    [b[0] / s, b[1] / s, b[2] / s]
}

/// Partition weight for `axis` in 0..3.
pub fn partition_weight(n: Vec3, axis: usize) -> f64 {
    partition_weights(n)[axis]
}

/// Origin of a node: the axis of its grid line and the lattice indices of
/// that line in the two orthogonal coordinates (in cyclic order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeTag {
    pub axis: u8,
    pub ja: i64,
    pub jb: i64,
}

/// Nodes, outward normals and weights of the projection quadrature.
#[derive(Debug, Clone)]
pub struct SurfaceQuadrature {
    pub h: f64,
    pub nodes: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub tags: Vec<NodeTag>,
}

impl SurfaceQuadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weighted sum of nodal values.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        surface_integral(self, f)
    }

    pub fn total_weight(&self) -> f64 {
        neumaier_sum(self.weights.iter().copied())
    }

    /// Writes nodes as CSV with a leading comment line.
    pub fn write_csv<W: Write>(&self, mut w: W, comment: &str) -> std::io::Result<()> {
        writeln!(w, "# {comment}")?;
        writeln!(w, "x,y,z,nx,ny,nz,w")?;
        for i in 0..self.len() {
            let (x, n) = (self.nodes[i], self.normals[i]);
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                x.x, x.y, x.z, n.x, n.y, n.z, self.weights[i]
            )?;
        }
        Ok(())
    }
}

pub(crate) fn neumaier_sum(it: impl Iterator<Item = f64>) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for v in it {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

/// Sum of w_i f_i over the nodes, compensated and in node order.
pub fn surface_integral(quad: &SurfaceQuadrature, f: &[f64]) -> Result<f64> {
    check_len(quad.len(), f.len())?;
    Ok(neumaier_sum(quad.weights.iter().zip(f).map(|(w, v)| w * v)))
}

struct LineNode {
    x: Vec3,
    n: Vec3,
    w: f64,
}

fn line_roots(surface: &LevelSetSurface, axis: usize, base: Vec3, k0: i64, k1: i64, h: f64) -> Result<Vec<LineNode>> {
    let at = |t: f64| {
        let mut a = base.to_array();
        a[axis] = t;
        Vec3::from(a)
    };
    let phi = |t: f64| surface.eval(at(t)).0;
    let t = PARTITION_ANGLE_DEG.to_radians();
    let cos_t = t.cos();

    let mut out = Vec::new();
    let mut t_prev = k0 as f64 * h;
    let mut f_prev = phi(t_prev);
    for k in (k0 + 1)..=k1 {
        let t_next = k as f64 * h;
        let f_next = phi(t_next);
        if (f_prev < 0.0) != (f_next < 0.0) {
            let (mut a, mut b) = (t_prev, t_next);
            let neg_a = f_prev < 0.0;
            let mut guard = 0;
            while b - a > BISECTION_WIDTH && guard < 200 {
                let m = 0.5 * (a + b);
                if (phi(m) < 0.0) == neg_a {
                    a = m;
                } else {
                    b = m;
                }
                guard += 1;
            }
            let mut r = 0.5 * (a + b);
            let (fv, g) = surface.eval(at(r));
            if g[axis] != 0.0 {
                let step = fv / g[axis];
                if step.abs() <= (b - a).max(BISECTION_WIDTH) {
                    r -= step;
                }
            }
            let x = at(r);
            let n = surface.unit_normal(x)?;
            let na = n[axis].abs();
            if na >= cos_t {
                // Roots whose partition weight underflows to zero are kept
                // as zero-weight nodes.
                let psi = partition_weights(n)[axis];
                out.push(LineNode { x, n, w: psi * h * h / na });
            }
        }
        t_prev = t_next;
        f_prev = f_next;
    }
    Ok(out)
}

/// Builds the projection quadrature for `surface` at grid spacing `h`.
pub fn find_quadrature_points(surface: &LevelSetSurface, h: f64) -> Result<SurfaceQuadrature> {
    check_positive("grid spacing h", h)?;
    let lo = surface.bbox.lo.to_array();
    let hi = surface.bbox.hi.to_array();
    let mut quad = SurfaceQuadrature { h, nodes: vec![], normals: vec![], weights: vec![], tags: vec![] };

    for axis in 0..3 {
        let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
        let range = |d: usize| ((lo[d] / h).ceil() as i64, (hi[d] / h).floor() as i64);
        let (ia0, ia1) = range(a);
        let (ib0, ib1) = range(b);
        let k0 = (lo[axis] / h).floor() as i64 - 1;
        let k1 = (hi[axis] / h).ceil() as i64 + 1;

        let lines: Vec<(i64, i64)> =
            (ia0..=ia1).flat_map(|ja| (ib0..=ib1).map(move |jb| (ja, jb))).collect();
        let found: Vec<Result<Vec<LineNode>>> = lines
            .par_iter()
            .map(|&(ja, jb)| {
                let mut base = [0.0; 3];
                base[a] = ja as f64 * h;
                base[b] = jb as f64 * h;
                line_roots(surface, axis, Vec3::from(base), k0, k1, h)
            })
            .collect();
        for (&(ja, jb), nodes) in lines.iter().zip(found) {
            for node in nodes? {
                quad.nodes.push(node.x);
                quad.normals.push(node.n);
                quad.weights.push(node.w);
                quad.tags.push(NodeTag { axis: axis as u8, ja, jb });
            }
        }
    }
    if quad.is_empty() {
        return Err(Error::EmptyQuadrature { h });
    }
    Ok(quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn level_set_values() {
        let s = LevelSetSurface::sphere(1.0).unwrap();
        let (v, g) = s.eval(Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(v, 0.0);
        assert_eq!(g, Vec3::new(2.0, 0.0, 0.0));

        let e = LevelSetSurface::ellipsoid(1.0, 0.6, 0.4).unwrap();
        assert!(e.eval(Vec3::new(0.0, 0.0, 0.4)).0.abs() < 1e-15);

        let m = LevelSetSurface::molecule();
        let x4 = molecule_centers()[3];
        let expected = 1.0 + 3.0 * (-1.0f64 / 0.25).exp() - 0.6;
        let (v, _) = m.eval(x4);
        assert!(v > 0.4);
        assert!((v - expected).abs() < 1e-14);
    }

    #[test]
    fn tetrahedron_has_unit_edges() {
        let c = molecule_centers();
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert!(((c[i] - c[j]).norm() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn normals() {
        let s = LevelSetSurface::sphere(1.0).unwrap();
        assert_eq!(s.unit_normal(Vec3::new(0.0, 0.0, 1.0)).unwrap(), Vec3::new(0.0, 0.0, 1.0));
        let e = LevelSetSurface::ellipsoid(1.0, 0.6, 0.4).unwrap();
        assert_eq!(e.unit_normal(Vec3::new(1.0, 0.0, 0.0)).unwrap(), Vec3::new(1.0, 0.0, 0.0));
        let s8 = LevelSetSurface::sphere(0.8).unwrap();
        let d = Vec3::new(1.0, 1.0, 1.0) * (1.0 / 3f64.sqrt());
        let n = s8.unit_normal(d * 0.8).unwrap();
        assert!((n - d).norm() < 1e-15);
        assert!(matches!(s.unit_normal(Vec3::ZERO), Err(Error::DegenerateGradient { .. })));
    }

    #[test]
    fn molecule_normal_points_outward() {
        let m = LevelSetSurface::molecule();
        let q = find_quadrature_points(&m, 0.125).unwrap();
        let centroid = molecule_centers().iter().fold(Vec3::ZERO, |a, c| a + *c) * 0.25;
        let outward = q.nodes.iter().zip(&q.normals).filter(|(x, n)| (**x - centroid).dot(**n) > 0.0).count();
        assert!(outward as f64 > 0.95 * q.len() as f64);
    }

    #[test]
    fn partition_examples() {
        let z = Vec3::new(0.0, 0.0, 1.0);
        assert_eq!(partition_weight(z, 2), 1.0);
        assert_eq!(partition_weight(z, 0), 0.0);
        let d = Vec3::new(1.0, 1.0, 1.0) * (1.0 / 3f64.sqrt());
        for a in 0..3 {
            assert!((partition_weight(d, a) - 1.0 / 3.0).abs() < 1e-15);
        }
        let c = 70f64.to_radians().cos();
        let n = Vec3::new(c, (1.0 - c * c).sqrt(), 0.0);
        assert_eq!(partition_weight(n, 0), 0.0);
    }

    #[test]
    fn sphere_integrals() {
        let s = LevelSetSurface::sphere(1.0).unwrap();
        let q = find_quadrature_points(&s, 1.0 / 32.0).unwrap();
        let area = q.total_weight();
        assert!((area - 4.0 * PI).abs() < 1e-6 * 4.0 * PI);
        let x2: Vec<f64> = q.nodes.iter().map(|x| x.x * x.x).collect();
        let v = surface_integral(&q, &x2).unwrap();
        assert!((v - 4.0 * PI / 3.0).abs() < 1e-6 * 4.0 * PI / 3.0);
        assert!(surface_integral(&q, &x2[1..]).is_err());
    }

    #[test]
    fn empty_quadrature_is_an_error() {
        let s = LevelSetSurface::sphere(1e-3).unwrap();
        // A box away from the body: the single grid line misses the surface.
        let tiny = Aabb { lo: Vec3::new(0.5, 0.5, 0.5), hi: Vec3::new(0.6, 0.6, 0.6) };
        let moved = LevelSetSurface { bbox: tiny, ..s };
        assert!(matches!(find_quadrature_points(&moved, 0.5), Err(Error::EmptyQuadrature { .. })));
    }

    #[test]
    fn csv_export() {
        let s = LevelSetSurface::sphere(1.0).unwrap();
        let q = find_quadrature_points(&s, 0.25).unwrap();
        let mut buf = Vec::new();
        q.write_csv(&mut buf, "test").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# test");
        assert_eq!(lines[1], "x,y,z,nx,ny,nz,w");
        assert_eq!(lines.len(), q.len() + 2);
        let first: Vec<f64> = lines[2].split(',').map(|t| t.parse().unwrap()).collect();
        assert_eq!(first[0], q.nodes[0].x);
        assert_eq!(first[6], q.weights[0]);
    }
}
