//! Manifold models, good covers, based loops and cylinders, and the
//! chart-assignment of interval and rectangle subdivisions.
//!
//! Curves are closures over dual numbers, so tangent vectors are exact.

use crate::dual::{Jet, Real};
use crate::error::{Error, Result};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::Arc;

pub type Vec3 = Vector3<f64>;
pub type P3<S> = [S; 3];

pub const DEFAULT_COLLAR: f64 = 1.0 / 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Unit sphere in R³, coordinates x, y, z.
    Sphere,
    /// R²/Z², points stored as unwrapped lifts (u, v, 0).
    Torus,
    /// Open square (-1, 1)², coordinates (u, v, 0).
    Plane,
    /// Open unit cube, coordinates u, v, w.
    Cube,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldModel {
    pub kind: ModelKind,
    pub basepoint: Vec3,
}

fn wrap(x: f64) -> f64 {
    x - x.round()
}

impl ManifoldModel {
    pub fn new(kind: ModelKind) -> Self {
        let basepoint = match kind {
            ModelKind::Sphere => Vec3::new(0.0, 0.0, 1.0),
            ModelKind::Torus => Vec3::new(1.0 / 6.0, 1.0 / 6.0, 0.0),
            ModelKind::Plane => Vec3::new(-0.5, -0.5, 0.0),
            ModelKind::Cube => Vec3::new(0.5, 0.5, 0.5),
        };
        ManifoldModel { kind, basepoint }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            ModelKind::Cube => 3,
            _ => 2,
        }
    }

    /// Names of the ambient coordinates usable in expressions.
    pub fn coordinate_names(&self) -> &'static [&'static str] {
        match self.kind {
            ModelKind::Sphere => &["x", "y", "z"],
            ModelKind::Torus | ModelKind::Plane => &["u", "v"],
            ModelKind::Cube => &["u", "v", "w"],
        }
    }

    /// Number of ambient coordinates forms are written in.
    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ModelKind::Sphere | ModelKind::Cube => 3,
            _ => 2,
        }
    }

    /// Maps a nearby ambient point back onto the model.
    pub fn retract(&self, p: &Vec3) -> Vec3 {
        match self.kind {
            ModelKind::Sphere => p.normalize(),
            ModelKind::Torus | ModelKind::Plane => Vec3::new(p.x, p.y, 0.0),
            ModelKind::Cube => *p,
        }
    }

    pub fn same_point(&self, p: &Vec3, q: &Vec3, tol: f64) -> bool {
        match self.kind {
            ModelKind::Torus => wrap(p.x - q.x).abs() <= tol && wrap(p.y - q.y).abs() <= tol,
            _ => (p - q).norm() <= tol,
        }
    }

    pub fn tangent_project(&self, p: &Vec3, v: &Vec3) -> Vec3 {
        match self.kind {
            ModelKind::Sphere => v - p * p.dot(v),
            ModelKind::Torus | ModelKind::Plane => Vec3::new(v.x, v.y, 0.0),
            ModelKind::Cube => *v,
        }
    }

    pub fn random_point<R: Rng>(&self, rng: &mut R) -> Vec3 {
        match self.kind {
            ModelKind::Sphere => loop {
                let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let n = v.norm();
                if n > 0.1 && n <= 1.0 {
                    return v / n;
                }
            },
            ModelKind::Torus => Vec3::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), 0.0),
            ModelKind::Plane => Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0),
            ModelKind::Cube => Vec3::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)),
        }
    }

    /// Unit tangent vector at `p`.
    pub fn random_tangent<R: Rng>(&self, p: &Vec3, rng: &mut R) -> Vec3 {
        loop {
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let t = self.tangent_project(p, &v);
            let n = t.norm();
            if n > 0.1 {
                return t / n;
            }
        }
    }

    /// Curve through `p` with velocity `v` at 0, staying on the model.
    pub fn retraction_curve(&self, p: &Vec3, v: &Vec3, t: f64) -> Vec3 {
        self.retract(&(p + v * t))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChartShape {
    /// Geodesic cap on the unit sphere.
    Cap { center: Vec3, radius: f64 },
    /// Axis-parallel square on the torus, wrapping.
    Square { center: (f64, f64), half: f64 },
    /// Open box in the ambient coordinates.
    Box { lo: Vec3, hi: Vec3, dim: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub label: String,
    pub shape: ChartShape,
}

impl Chart {
    /// Signed distance-like depth; positive strictly inside.
    pub fn depth(&self, p: &Vec3) -> f64 {
        match &self.shape {
            ChartShape::Cap { center, radius } => {
                let d = p.normalize().dot(center).clamp(-1.0, 1.0);
                radius - d.acos()
            }
            ChartShape::Square { center, half } => {
                let du = wrap(p.x - center.0).abs();
                let dv = wrap(p.y - center.1).abs();
                half - du.max(dv)
            }
            ChartShape::Box { lo, hi, dim } => {
                let mut m = f64::INFINITY;
                for k in 0..*dim {
                    m = m.min(p[k] - lo[k]).min(hi[k] - p[k]);
                }
                m
            }
        }
    }

    pub fn contains(&self, p: &Vec3, margin: f64) -> bool {
        self.depth(p) > margin
    }

    /// Chart-local coordinates: identity except on the torus, where the lift
    /// nearest the chart centre is used.
    pub fn localize(&self, p: &Vec3) -> Vec3 {
        match &self.shape {
            ChartShape::Square { center, .. } => {
                Vec3::new(center.0 + wrap(p.x - center.0), center.1 + wrap(p.y - center.1), 0.0)
            }
            _ => *p,
        }
    }
}

/// A good cover with its non-empty overlaps.
#[derive(Clone, Debug, PartialEq)]
pub struct Cover {
    pub charts: Vec<Chart>,
    pub pairs: Vec<(usize, usize)>,
    pub triples: Vec<(usize, usize, usize)>,
    pub quadruples: Vec<[usize; 4]>,
}

impl Cover {
    /// Builds a cover and detects its overlaps on a dense deterministic sample.
    pub fn new(model: &ManifoldModel, charts: Vec<Chart>) -> Cover {
        let mut sets: BTreeSet<Vec<usize>> = BTreeSet::new();
        for p in overlap_probe(model) {
            let inside: Vec<usize> = (0..charts.len()).filter(|&i| charts[i].contains(&p, 0.0)).collect();
            if inside.len() >= 2 {
                sets.insert(inside);
            }
        }
        let mut pairs = BTreeSet::new();
        let mut triples = BTreeSet::new();
        let mut quads = BTreeSet::new();
        for s in &sets {
            let n = s.len();
            for a in 0..n {
                for b in a + 1..n {
                    pairs.insert((s[a], s[b]));
                    for c in b + 1..n {
                        triples.insert((s[a], s[b], s[c]));
                        for d in c + 1..n {
                            quads.insert([s[a], s[b], s[c], s[d]]);
                        }
                    }
                }
            }
        }
        Cover {
            charts,
            pairs: pairs.into_iter().collect(),
            triples: triples.into_iter().collect(),
            quadruples: quads.into_iter().collect(),
        }
    }

    /// Four caps of radius 80° centred on a regular tetrahedron with one
    /// vertex at the north pole.
    pub fn sphere_tetra(model: &ManifoldModel) -> Cover {
        let r = 80f64.to_radians();
        let mut centers = vec![Vec3::new(0.0, 0.0, 1.0)];
        let rho = (8.0f64 / 9.0).sqrt();
        for k in 0..3 {
            let a = 2.0 * PI * k as f64 / 3.0;
            centers.push(Vec3::new(rho * a.cos(), rho * a.sin(), -1.0 / 3.0));
        }
        let charts = centers
            .into_iter()
            .enumerate()
            .map(|(i, c)| Chart { label: format!("cap{i}"), shape: ChartShape::Cap { center: c, radius: r } })
            .collect();
        Cover::new(model, charts)
    }

    /// `n × n` grid of overlapping squares on the torus.
    pub fn torus_grid(model: &ManifoldModel, n: usize, overlap: f64) -> Cover {
        let w = 1.0 / n as f64;
        let mut charts = Vec::new();
        for b in 0..n {
            for a in 0..n {
                charts.push(Chart {
                    label: format!("sq{a}{b}"),
                    shape: ChartShape::Square {
                        center: ((a as f64 + 0.5) * w, (b as f64 + 0.5) * w),
                        half: 0.5 * w + overlap,
                    },
                });
            }
        }
        Cover::new(model, charts)
    }

    /// 2×2 overlapping rectangles on the open square.
    pub fn plane_quadrants(model: &ManifoldModel) -> Cover {
        let mut charts = Vec::new();
        for (b, (vl, vh)) in [(-1.0, 0.3), (-0.3, 1.0)].into_iter().enumerate() {
            for (a, (ul, uh)) in [(-1.0, 0.3), (-0.3, 1.0)].into_iter().enumerate() {
                charts.push(Chart {
                    label: format!("quad{a}{b}"),
                    shape: ChartShape::Box { lo: Vec3::new(ul, vl, 0.0), hi: Vec3::new(uh, vh, 0.0), dim: 2 },
                });
            }
        }
        Cover::new(model, charts)
    }

    pub fn cube_single(model: &ManifoldModel) -> Cover {
        let charts = vec![Chart {
            label: "cube".into(),
            shape: ChartShape::Box { lo: Vec3::zeros(), hi: Vec3::new(1.0, 1.0, 1.0), dim: 3 },
        }];
        Cover::new(model, charts)
    }

    pub fn default_for(model: &ManifoldModel) -> Cover {
        match model.kind {
            ModelKind::Sphere => Cover::sphere_tetra(model),
            ModelKind::Torus => Cover::torus_grid(model, 3, 0.04),
            ModelKind::Plane => Cover::plane_quadrants(model),
            ModelKind::Cube => Cover::cube_single(model),
        }
    }

    pub fn len(&self) -> usize {
        self.charts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }

    pub fn in_all(&self, p: &Vec3, idx: &[usize], margin: f64) -> bool {
        idx.iter().all(|&i| self.charts[i].contains(p, margin))
    }

    /// Uniform sample of the model conditioned on lying in every chart of `idx`.
    pub fn sample_region<R: Rng>(&self, model: &ManifoldModel, idx: &[usize], rng: &mut R) -> Option<Vec3> {
        for _ in 0..200_000 {
            let p = model.random_point(rng);
            if self.in_all(&p, idx, 1e-3) {
                return Some(p);
            }
        }
        None
    }
}

fn overlap_probe(model: &ManifoldModel) -> Vec<Vec3> {
    match model.kind {
        ModelKind::Sphere => {
            let n = 20_000;
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * k as f64;
                    Vec3::new(r * a.cos(), r * a.sin(), z)
                })
                .collect()
        }
        ModelKind::Torus => grid2(0.0, 1.0, 240),
        ModelKind::Plane => grid2(-1.0, 1.0, 200),
        ModelKind::Cube => vec![Vec3::new(0.5, 0.5, 0.5)],
    }
}

fn grid2(lo: f64, hi: f64, n: usize) -> Vec<Vec3> {
    let h = (hi - lo) / n as f64;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(Vec3::new(lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h, 0.0));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Generic curve building blocks.

/// Degree-7 smoothstep on [0, 1], clamped outside; C³ at the ends.
pub fn smoothstep<S: Real>(x: S) -> S {
    let v = x.value();
    if v <= 0.0 {
        return S::cst(0.0);
    }
    if v >= 1.0 {
        return S::cst(1.0);
    }
    let x2 = x * x;
    let x4 = x2 * x2;
    x4 * (((x * -20.0 + 70.0) * x - 84.0) * x + 35.0)
}

/// Reparametrisation constant 0 on `[0, δ]` and 1 on `[1-δ, 1]`.
pub fn collar<S: Real>(t: S, delta: f64) -> S {
    smoothstep((t - delta) / (1.0 - 2.0 * delta))
}

pub fn cst3<S: Real>(p: &Vec3) -> P3<S> {
    [S::cst(p.x), S::cst(p.y), S::cst(p.z)]
}

fn normalize3<S: Real>(p: P3<S>) -> P3<S> {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / n, p[1] / n, p[2] / n]
}

/// Shortest model geodesic from `a` to `b` (reparametrised on the sphere).
pub fn geodesic<S: Real>(kind: ModelKind, a: P3<S>, b: P3<S>, tau: S) -> P3<S> {
    let lin = [
        a[0] + (b[0] - a[0]) * tau,
        a[1] + (b[1] - a[1]) * tau,
        a[2] + (b[2] - a[2]) * tau,
    ];
    match kind {
        ModelKind::Sphere => normalize3(lin),
        _ => lin,
    }
}

/// Polygon through `pts` in equal time slots, sitting at every vertex.
pub fn chain<S: Real>(kind: ModelKind, pts: &[P3<S>], u: S) -> P3<S> {
    let k = pts.len() - 1;
    let x = u * k as f64;
    let j = (x.value().floor() as usize).min(k - 1);
    let tau = smoothstep(x - j as f64);
    geodesic(kind, pts[j], pts[j + 1], tau)
}

/// Rotation of the north pole about the axis at polar angle `beta` in the
/// xz-plane by angle `phi`: the circles through the pole.
pub fn pole_circle<S: Real>(beta: S, phi: S) -> P3<S> {
    let (sb, cb) = (beta.sin(), beta.cos());
    let (sp, cp) = (phi.sin(), phi.cos());
    let one_m = -cp + 1.0;
    [sb * cb * one_m, -sb * sp, cp + cb * cb * one_m]
}

pub fn spherical<S: Real>(theta: S, phi: S) -> P3<S> {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

fn vec_of<const N: usize>(p: &P3<Jet<N>>) -> Vec3 {
    Vec3::new(p[0].v, p[1].v, p[2].v)
}

fn der_of<const N: usize>(p: &P3<Jet<N>>, k: usize) -> Vec3 {
    Vec3::new(p[0].d[k], p[1].d[k], p[2].d[k])
}

// ---------------------------------------------------------------------------
// Curves and loops.

pub type CurveFn = Arc<dyn Fn(Jet<1>) -> P3<Jet<1>> + Send + Sync>;
pub type SurfaceFn = Arc<dyn Fn(Jet<2>, Jet<2>) -> P3<Jet<2>> + Send + Sync>;

/// A smooth map `[0, 1] → M` with exact velocity.
#[derive(Clone)]
pub struct Curve {
    f: CurveFn,
    /// Length of the sitting intervals at both ends.
    pub collar: f64,
}

impl std::fmt::Debug for Curve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Curve {{ collar: {} }}", self.collar)
    }
}

impl Curve {
    pub fn new(collar: f64, f: impl Fn(Jet<1>) -> P3<Jet<1>> + Send + Sync + 'static) -> Curve {
        Curve { f: Arc::new(f), collar }
    }

    pub fn point(&self, t: f64) -> Vec3 {
        vec_of(&(self.f)(Jet::constant(t)))
    }

    /// Point and velocity.
    pub fn eval(&self, t: f64) -> (Vec3, Vec3) {
        let p = (self.f)(Jet::var(t, 0));
        (vec_of(&p), der_of(&p, 0))
    }

    pub fn eval_jet(&self, t: Jet<1>) -> P3<Jet<1>> {
        (self.f)(t)
    }

    pub fn reverse(&self) -> Curve {
        let f = self.f.clone();
        Curve::new(self.collar, move |t| f(-t + 1.0))
    }

    pub fn concat(&self, other: &Curve) -> Curve {
        let (f, g) = (self.f.clone(), other.f.clone());
        Curve::new(self.collar.min(other.collar) / 2.0, move |t| {
            if t.v < 0.5 {
                f(t * 2.0)
            } else {
                g(t * 2.0 - 1.0)
            }
        })
    }

    /// `t ↦ self(φ(t))`.
    pub fn reparam(&self, phi: impl Fn(Jet<1>) -> Jet<1> + Send + Sync + 'static) -> Curve {
        let f = self.f.clone();
        Curve::new(self.collar, move |t| f(phi(t)))
    }
}

/// A based loop: starts and ends at the basepoint and sits on its collars.
#[derive(Clone, Debug)]
pub struct Loop(pub Curve);

impl Loop {
    /// Checks basedness and sitting at sampled collar points.
    pub fn new(model: &ManifoldModel, curve: Curve) -> Result<Loop> {
        let d = curve.collar;
        for k in 0..=8 {
            let s = d * k as f64 / 8.0;
            for t in [s, 1.0 - s] {
                let p = curve.point(t);
                if !model.same_point(&p, &model.basepoint, 1e-9) {
                    return Err(if k == 0 { Error::NotBased } else { Error::NotSitting });
                }
            }
        }
        Ok(Loop(curve))
    }

    pub fn constant(model: &ManifoldModel) -> Loop {
        let b = model.basepoint;
        Loop(Curve::new(DEFAULT_COLLAR, move |_| cst3(&b)))
    }

    pub fn curve(&self) -> &Curve {
        &self.0
    }

    pub fn collar(&self) -> f64 {
        self.0.collar
    }

    pub fn eval(&self, t: f64) -> (Vec3, Vec3) {
        self.0.eval(t)
    }

    pub fn point(&self, t: f64) -> Vec3 {
        self.0.point(t)
    }

    pub fn concat(&self, o: &Loop) -> Loop {
        Loop(self.0.concat(&o.0))
    }

    pub fn reverse(&self) -> Loop {
        Loop(self.0.reverse())
    }

    /// Thin reparametrisation by `φ`, which must fix both collars.
    pub fn deform_thin(&self, phi: impl Fn(Jet<1>) -> Jet<1> + Send + Sync + 'static) -> Loop {
        Loop(self.0.reparam(phi))
    }

    /// Whether the loop sits at the basepoint for all sampled times.
    pub fn is_constant(&self, model: &ManifoldModel, samples: usize) -> bool {
        (0..=samples).all(|k| model.same_point(&self.point(k as f64 / samples as f64), &model.basepoint, 1e-12))
    }
}

/// Smooth monotone reparametrisation `t ↦ t^p` applied between the collars.
pub fn power_reparam(delta: f64, p: f64) -> impl Fn(Jet<1>) -> Jet<1> + Send + Sync + Clone {
    move |t: Jet<1>| {
        let x = (t - delta) / (1.0 - 2.0 * delta);
        if x.v <= 0.0 || x.v >= 1.0 {
            return t;
        }
        // Blend the identity into x^p so the map is smooth at the collar edges.
        let w = smoothstep(x * 4.0) * smoothstep((-x + 1.0) * 4.0);
        let xp = (x.value().ln() * p).exp();
        let xpj = Jet { v: xp, d: [p * xp / x.v * x.d[0]] };
        let y = x + (xpj - x) * w;
        y * (1.0 - 2.0 * delta) + delta
    }
}

/// A based cylinder `c(s, t)`: `s` is the homotopy parameter and `t` the loop
/// parameter; it sits on all four collars.
#[derive(Clone)]
pub struct Cylinder {
    f: SurfaceFn,
    pub collar: f64,
}

impl std::fmt::Debug for Cylinder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Cylinder {{ collar: {} }}", self.collar)
    }
}

impl Cylinder {
    pub fn new_unchecked(collar: f64, f: impl Fn(Jet<2>, Jet<2>) -> P3<Jet<2>> + Send + Sync + 'static) -> Cylinder {
        Cylinder { f: Arc::new(f), collar }
    }

    /// Checks the sitting conditions at sampled boundary points.
    pub fn new(
        model: &ManifoldModel,
        collar: f64,
        f: impl Fn(Jet<2>, Jet<2>) -> P3<Jet<2>> + Send + Sync + 'static,
    ) -> Result<Cylinder> {
        let c = Cylinder::new_unchecked(collar, f);
        c.check(model)?;
        Ok(c)
    }

    pub fn check(&self, model: &ManifoldModel) -> Result<()> {
        let d = self.collar;
        for i in 0..=6 {
            for j in 0..=12 {
                let x = j as f64 / 12.0;
                let y = d * i as f64 / 6.0;
                for t in [y, 1.0 - y] {
                    if !model.same_point(&self.point(x, t), &model.basepoint, 1e-9) {
                        return Err(Error::NotBased);
                    }
                }
                for s in [y, 1.0 - y] {
                    let e = if s < 0.5 { 0.0 } else { 1.0 };
                    if (self.point(s, x) - self.point(e, x)).norm() > 1e-9 {
                        return Err(Error::NotSitting);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn point(&self, s: f64, t: f64) -> Vec3 {
        vec_of(&(self.f)(Jet::constant(s), Jet::constant(t)))
    }

    /// Point, `∂_s c`, `∂_t c`.
    pub fn eval(&self, s: f64, t: f64) -> (Vec3, Vec3, Vec3) {
        let p = (self.f)(Jet::var(s, 0), Jet::var(t, 1));
        (vec_of(&p), der_of(&p, 0), der_of(&p, 1))
    }

    pub fn eval_jet(&self, s: Jet<2>, t: Jet<2>) -> P3<Jet<2>> {
        (self.f)(s, t)
    }

    /// The loop `t ↦ c(s0, t)`.
    pub fn slice(&self, s0: f64) -> Loop {
        let f = self.f.clone();
        Loop(Curve::new(self.collar, move |t: Jet<1>| {
            let p = f(Jet::constant(s0), Jet { v: t.v, d: [0.0, 1.0] });
            p.map(|x| Jet { v: x.v, d: [x.d[1] * t.d[0]] })
        }))
    }

    pub fn start_loop(&self) -> Loop {
        self.slice(0.0)
    }

    pub fn end_loop(&self) -> Loop {
        self.slice(1.0)
    }

    /// Constant homotopy at a loop.
    pub fn constant(l: &Loop) -> Cylinder {
        let c = l.0.clone();
        Cylinder::new_unchecked(l.collar(), move |_s, t| {
            let p = c.eval_jet(Jet { v: t.v, d: [1.0] });
            p.map(|x| Jet { v: x.v, d: [x.d[0] * t.d[0], x.d[0] * t.d[1]] })
        })
    }

    fn boundary_gap(a: &Loop, b: &Loop) -> f64 {
        (0..=64).map(|k| (a.point(k as f64 / 64.0) - b.point(k as f64 / 64.0)).norm()).fold(0.0, f64::max)
    }

    /// `self` followed by `other` in the homotopy direction.
    pub fn vertical(&self, other: &Cylinder) -> Result<Cylinder> {
        let gap = Self::boundary_gap(&self.end_loop(), &other.start_loop());
        if gap > 1e-9 {
            return Err(Error::BoundaryMismatch { residual: gap });
        }
        let (f, g) = (self.f.clone(), other.f.clone());
        Ok(Cylinder::new_unchecked(self.collar.min(other.collar) / 2.0, move |s, t| {
            if s.v < 0.5 {
                f(s * 2.0, t)
            } else {
                g(s * 2.0 - 1.0, t)
            }
        }))
    }

    /// Concatenation in the loop direction.
    pub fn horizontal(&self, other: &Cylinder) -> Cylinder {
        let (f, g) = (self.f.clone(), other.f.clone());
        Cylinder::new_unchecked(self.collar.min(other.collar) / 2.0, move |s, t| {
            if t.v < 0.5 {
                f(s, t * 2.0)
            } else {
                g(s, t * 2.0 - 1.0)
            }
        })
    }

    /// Reverse homotopy.
    pub fn flip(&self) -> Cylinder {
        let f = self.f.clone();
        Cylinder::new_unchecked(self.collar, move |s, t| f(-s + 1.0, t))
    }

    /// `c(φ(s), ψ(t))`; `φ` may be non-monotone (a fold) as long as it fixes
    /// the collars, which keeps the deformation thin.
    pub fn reparam(
        &self,
        phi: impl Fn(Jet<2>) -> Jet<2> + Send + Sync + 'static,
        psi: impl Fn(Jet<2>) -> Jet<2> + Send + Sync + 'static,
    ) -> Cylinder {
        let f = self.f.clone();
        Cylinder::new_unchecked(self.collar, move |s, t| f(phi(s), psi(t)))
    }
}

/// A fold `s ↦ s + a·b(s)` with a bump `b` supported between the collars;
/// for `a` large enough the map is non-monotone.
pub fn fold_map<S: Real>(s: S, delta: f64, amplitude: f64) -> S {
    let x = (s - delta) / (1.0 - 2.0 * delta);
    if x.value() <= 0.0 || x.value() >= 1.0 {
        return s;
    }
    let b = (x * PI * 2.0).sin() * smoothstep(x * 3.0) * smoothstep((-x + 1.0) * 3.0);
    s + b * (amplitude * (1.0 - 2.0 * delta))
}

/// Monotone warp between the collars.
pub fn warp_map<S: Real>(s: S, delta: f64, strength: f64) -> S {
    let x = (s - delta) / (1.0 - 2.0 * delta);
    if x.value() <= 0.0 || x.value() >= 1.0 {
        return s;
    }
    let y = x + (x * PI).sin() * (x * PI).sin() * (x * PI * 2.0).sin() * (strength / (2.0 * PI));
    y * (1.0 - 2.0 * delta) + delta
}

// ---------------------------------------------------------------------------
// Subdivisions.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalSubdivision {
    pub breaks: Vec<f64>,
    pub charts: Vec<usize>,
}

impl IntervalSubdivision {
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        (0..self.charts.len()).map(move |k| (self.breaks[k], self.breaks[k + 1], self.charts[k]))
    }

    pub fn chart_at(&self, t: f64) -> usize {
        for (a, b, c) in self.cells() {
            if t >= a && t <= b {
                return c;
            }
        }
        *self.charts.last().unwrap()
    }
}

/// Rectangle grid; row `r` spans `s_breaks[r..r+2]`, column `j` spans
/// `t_breaks[j..j+2]`, charts stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectSubdivision {
    pub t_breaks: Vec<f64>,
    pub s_breaks: Vec<f64>,
    pub charts: Vec<usize>,
}

impl RectSubdivision {
    pub fn nt(&self) -> usize {
        self.t_breaks.len() - 1
    }

    pub fn ns(&self) -> usize {
        self.s_breaks.len() - 1
    }

    pub fn chart(&self, row: usize, col: usize) -> usize {
        self.charts[row * self.nt() + col]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartPreference {
    Lowest,
    Deepest,
    Seeded(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignOptions {
    pub max_depth: usize,
    /// Samples per cell edge used to certify containment.
    pub density: usize,
    /// Required depth inside the chosen chart.
    pub margin: f64,
    pub preference: ChartPreference,
    /// Extra uniform bisections of the rectangle grid.
    pub refine: usize,
}

impl Default for AssignOptions {
    fn default() -> Self {
        AssignOptions { max_depth: 14, density: 12, margin: 0.01, preference: ChartPreference::Deepest, refine: 0 }
    }
}

fn choose_chart(cover: &Cover, pts: &[Vec3], opts: &AssignOptions, key: (f64, f64)) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    let mut fits = Vec::new();
    for (i, ch) in cover.charts.iter().enumerate() {
        let d = pts.iter().map(|p| ch.depth(p)).fold(f64::INFINITY, f64::min);
        if d > opts.margin {
            fits.push(i);
            if best.map_or(true, |(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
    }
    if fits.is_empty() {
        return None;
    }
    match opts.preference {
        ChartPreference::Lowest => Some(fits[0]),
        ChartPreference::Deepest => best.map(|b| b.0),
        ChartPreference::Seeded(seed) => {
            let mix = seed ^ key.0.to_bits().rotate_left(17) ^ key.1.to_bits().rotate_left(41);
            let mut r = ChaCha8Rng::seed_from_u64(mix);
            Some(fits[r.gen_range(0..fits.len())])
        }
    }
}

/// Largest gap between neighbouring samples of a `rows × cols` grid.
fn max_gap(pts: &[Vec3], rows: usize, cols: usize) -> (f64, f64) {
    let (mut gr, mut gc) = (0.0f64, 0.0f64);
    for r in 0..rows {
        for k in 0..cols {
            let p = &pts[r * cols + k];
            if k + 1 < cols {
                gc = gc.max((p - pts[r * cols + k + 1]).norm());
            }
            if r + 1 < rows {
                gr = gr.max((p - pts[(r + 1) * cols + k]).norm());
            }
        }
    }
    (gr, gc)
}

/// Sample counts are raised until neighbouring samples are at most `margin`
/// apart, so a fast stretch of the image cannot slip between samples.
const MAX_SAMPLES: usize = 2048;

fn resolved_samples_1d(f: impl Fn(f64) -> Vec3, a: f64, b: f64, opts: &AssignOptions) -> Vec<Vec3> {
    let mut n = opts.density.max(1);
    loop {
        let pts: Vec<Vec3> = (0..=n).map(|k| f(a + (b - a) * k as f64 / n as f64)).collect();
        let (_, gap) = max_gap(&pts, 1, n + 1);
        if gap <= opts.margin || n >= MAX_SAMPLES {
            return pts;
        }
        n = ((n as f64 * gap / opts.margin).ceil() as usize + 1).min(MAX_SAMPLES);
    }
}

/// Gives up as soon as `viable` rejects a sample set: denser samples
/// cannot make a failing cell fit.
fn resolved_samples_2d(
    f: impl Fn(f64, f64) -> Vec3,
    s: (f64, f64),
    t: (f64, f64),
    opts: &AssignOptions,
    viable: impl Fn(&[Vec3]) -> bool,
) -> Option<Vec<Vec3>> {
    let (mut ns, mut nt) = (opts.density.max(1), opts.density.max(1));
    let cap = MAX_SAMPLES / 8;
    loop {
        let mut pts = Vec::with_capacity((ns + 1) * (nt + 1));
        for a in 0..=ns {
            for b in 0..=nt {
                pts.push(f(s.0 + (s.1 - s.0) * a as f64 / ns as f64, t.0 + (t.1 - t.0) * b as f64 / nt as f64));
            }
        }
        if !viable(&pts) {
            return None;
        }
        let (gs, gt) = max_gap(&pts, ns + 1, nt + 1);
        let grow = |n: usize, g: f64| if g > opts.margin { ((n as f64 * g / opts.margin).ceil() as usize + 1).min(cap) } else { n };
        let (ns2, nt2) = (grow(ns, gs), grow(nt, gt));
        if (ns2, nt2) == (ns, nt) {
            return Some(pts);
        }
        (ns, nt) = (ns2, nt2);
    }
}

fn dedup_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    v
}

/// Splits `[0, 1]` until every cell's sampled image fits one chart; cells at
/// the ends are assigned the basepoint chart 0.
pub fn assign_charts_interval(cover: &Cover, curve: &Curve, opts: &AssignOptions) -> Result<IntervalSubdivision> {
    assign_charts_path(cover, curve, opts, (Some(0), Some(0)))
}

/// As [`assign_charts_interval`] for an open path whose first and last cells
/// may be pinned to given charts.
pub fn assign_charts_path(
    cover: &Cover,
    curve: &Curve,
    opts: &AssignOptions,
    ends: (Option<usize>, Option<usize>),
) -> Result<IntervalSubdivision> {
    let mut breaks = vec![0.0];
    let mut charts = Vec::new();
    // Depth-first with the leftmost cell on top of the stack.
    let mut work = vec![(0.0f64, 1.0f64, 0usize)];
    while let Some((a, b, depth)) = work.pop() {
        let pts = resolved_samples_1d(|t| curve.point(t), a, b, opts);
        let pinned: Vec<usize> = [(a == 0.0, ends.0), (b == 1.0, ends.1)]
            .into_iter()
            .filter_map(|(at_end, ch)| if at_end { ch } else { None })
            .collect();
        let choice = match pinned.as_slice() {
            [] => choose_chart(cover, &pts, opts, (a, b)),
            [ch, rest @ ..] if rest.iter().all(|r| r == ch) => {
                let d = pts.iter().map(|p| cover.charts[*ch].depth(p)).fold(f64::INFINITY, f64::min);
                (d > opts.margin).then_some(*ch)
            }
            _ => None,
        };
        match choice {
            Some(ch) => {
                breaks.push(b);
                charts.push(ch);
            }
            None => {
                if depth >= opts.max_depth {
                    return Err(Error::MaxDepthExceeded(opts.max_depth));
                }
                let m = 0.5 * (a + b);
                work.push((m, b, depth + 1));
                work.push((a, m, depth + 1));
            }
        }
    }
    Ok(IntervalSubdivision { breaks, charts })
}

/// Rectangle subdivision compatible with given boundary subdivisions: the
/// collar rows reuse the boundary charts and the collar columns use chart 0.
pub fn assign_charts_rect(
    cover: &Cover,
    cyl: &Cylinder,
    start: &IntervalSubdivision,
    end: &IntervalSubdivision,
    opts: &AssignOptions,
) -> Result<RectSubdivision> {
    let d = cyl.collar;
    let mut tb: Vec<f64> = start.breaks.iter().chain(end.breaks.iter()).copied().chain([d, 1.0 - d]).collect();
    tb = dedup_sorted(tb);
    let mut sb = vec![0.0, d, 1.0 - d, 1.0];
    for _ in 0..opts.refine {
        tb = bisect_all(&tb);
        sb = bisect_all(&sb);
    }
    let mut depth = 0;
    loop {
        let nt = tb.len() - 1;
        let ns = sb.len() - 1;
        let mut charts = vec![0usize; nt * ns];
        let mut new_t = Vec::new();
        let mut new_s = Vec::new();
        for r in 0..ns {
            let (s0, s1) = (sb[r], sb[r + 1]);
            for j in 0..nt {
                let (t0, t1) = (tb[j], tb[j + 1]);
                let tm = 0.5 * (t0 + t1);
                let ch = if t1 <= d + 1e-12 || t0 >= 1.0 - d - 1e-12 {
                    Some(0)
                } else if s1 <= d + 1e-12 {
                    Some(start.chart_at(tm))
                } else if s0 >= 1.0 - d - 1e-12 {
                    Some(end.chart_at(tm))
                } else {
                    let key = (tm, 0.5 * (s0 + s1));
                    let viable = |pts: &[Vec3]| choose_chart(cover, pts, opts, key).is_some();
                    resolved_samples_2d(|s, t| cyl.point(s, t), (s0, s1), (t0, t1), opts, viable)
                        .and_then(|pts| choose_chart(cover, &pts, opts, key))
                };
                match ch {
                    Some(c) => charts[r * nt + j] = c,
                    None => {
                        // split only the direction whose image is longer
                        let ls = image_length(|u| cyl.point(u, tm), s0, s1);
                        let lt = image_length(|u| cyl.point(0.5 * (s0 + s1), u), t0, t1);
                        let sm = 0.5 * (s0 + s1);
                        if lt >= 0.5 * ls {
                            new_t.push(tm);
                        }
                        if ls >= 0.5 * lt {
                            new_s.push(sm);
                        }
                    }
                }
            }
        }
        if new_t.is_empty() && new_s.is_empty() {
            return Ok(RectSubdivision { t_breaks: tb, s_breaks: sb, charts });
        }
        depth += 1;
        if depth > opts.max_depth {
            return Err(Error::MaxDepthExceeded(opts.max_depth));
        }
        tb = dedup_sorted(tb.into_iter().chain(new_t).collect());
        sb = dedup_sorted(sb.into_iter().chain(new_s).collect());
    }
}

/// Polyline length of a sampled image; enough segments that a path
/// returning to its start is not mistaken for a constant one.
fn image_length(f: impl Fn(f64) -> Vec3, a: f64, b: f64) -> f64 {
    const SEGMENTS: usize = 8;
    let pts: Vec<Vec3> = (0..=SEGMENTS).map(|k| f(a + (b - a) * k as f64 / SEGMENTS as f64)).collect();
    pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

fn bisect_all(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * v.len());
    for w in v.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.push(*v.last().unwrap());
    out
}

/// Resamples every cell at `factor` times the density and reports the
/// smallest depth of an image point inside its assigned chart.
pub fn certify_rect(cover: &Cover, cyl: &Cylinder, rect: &RectSubdivision, samples: usize) -> f64 {
    let mut worst = f64::INFINITY;
    for r in 0..rect.ns() {
        for j in 0..rect.nt() {
            let ch = &cover.charts[rect.chart(r, j)];
            for a in 0..=samples {
                for b in 0..=samples {
                    let s = rect.s_breaks[r] + (rect.s_breaks[r + 1] - rect.s_breaks[r]) * a as f64 / samples as f64;
                    let t = rect.t_breaks[j] + (rect.t_breaks[j + 1] - rect.t_breaks[j]) * b as f64 / samples as f64;
                    worst = worst.min(ch.depth(&cyl.point(s, t)));
                }
            }
        }
    }
    worst
}

pub fn certify_interval(cover: &Cover, curve: &Curve, sub: &IntervalSubdivision, samples: usize) -> f64 {
    let mut worst = f64::INFINITY;
    for (a, b, c) in sub.cells() {
        for k in 0..=samples {
            let p = curve.point(a + (b - a) * k as f64 / samples as f64);
            worst = worst.min(cover.charts[c].depth(&p));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A loop winding 12 times is at the basepoint at every coarse sample.
    #[test]
    fn aliased_loop_is_not_certified_from_coarse_samples() {
        let model = ManifoldModel::new(ModelKind::Torus);
        let cover = Cover::default_for(&model);
        let b = model.basepoint;
        let curve = Curve::new(0.0, move |t: Jet<1>| [t * 12.0 + b.x, Jet::constant(b.y), Jet::constant(0.0)]);
        let sub = assign_charts_interval(&cover, &curve, &AssignOptions::default()).unwrap();
        assert!(sub.charts.len() > 12);
        assert!(certify_interval(&cover, &curve, &sub, 20_000) > 0.0);
    }

    /// Stacking a bump on its reverse gives rows whose ends and middle all
    /// map to the same loop; the split must still see the s-direction.
    #[test]
    fn folded_bump_gets_a_finite_grid() {
        let model = ManifoldModel::new(ModelKind::Sphere);
        let cover = Cover::default_for(&model);
        let c = crate::catalog::sphere_bump(&model, 1.9, -1.0, -0.5).unwrap();
        let v = c.vertical(&c.flip()).unwrap();
        let o = AssignOptions::default();
        let s = assign_charts_interval(&cover, v.start_loop().curve(), &o).unwrap();
        let e = assign_charts_interval(&cover, v.end_loop().curve(), &o).unwrap();
        let rect = assign_charts_rect(&cover, &v, &s, &e, &o).unwrap();
        assert!(certify_rect(&cover, &v, &rect, 4 * o.density) > 0.0);
    }

    #[test]
    fn tetra_cover_has_all_pairs_and_triples_but_no_quadruple() {
        let m = ManifoldModel::new(ModelKind::Sphere);
        let c = Cover::sphere_tetra(&m);
        assert_eq!(c.pairs.len(), 6);
        assert_eq!(c.triples.len(), 4);
        assert!(c.quadruples.is_empty());
        assert!(c.charts[0].contains(&m.basepoint, 0.5));
        for k in 1..4 {
            assert!(!c.charts[k].contains(&m.basepoint, 0.0));
        }
        // Every probe point is covered with room to spare.
        for p in overlap_probe(&m) {
            assert!(c.charts.iter().any(|ch| ch.depth(&p) > 0.1));
        }
    }

    #[test]
    fn torus_grid_overlaps() {
        let m = ManifoldModel::new(ModelKind::Torus);
        let c = Cover::torus_grid(&m, 3, 0.04);
        assert_eq!(c.charts.len(), 9);
        // Each square meets its 8 neighbours on the 3×3 torus grid.
        assert_eq!(c.pairs.len(), 36);
        assert!(!c.quadruples.is_empty());
    }

    #[test]
    fn circles_through_pole_are_based_loops_with_exact_tangents() {
        let m = ManifoldModel::new(ModelKind::Sphere);
        let beta = 0.9;
        let curve = Curve::new(DEFAULT_COLLAR, move |t| {
            pole_circle(Jet::constant(beta), collar(t, DEFAULT_COLLAR) * (2.0 * PI))
        });
        let l = Loop::new(&m, curve).unwrap();
        let (p, v) = l.eval(0.37);
        let h = 1e-6;
        let fd = (l.point(0.37 + h) - l.point(0.37 - h)) / (2.0 * h);
        assert!((v - fd).norm() < 1e-7);
        assert!((p.norm() - 1.0).abs() < 1e-14);
        assert!(p.dot(&v).abs() < 1e-12);
    }

    #[test]
    fn unbased_curve_is_rejected() {
        let m = ManifoldModel::new(ModelKind::Plane);
        let curve = Curve::new(DEFAULT_COLLAR, |t| [t, t * 0.0, t * 0.0]);
        assert_eq!(Loop::new(&m, curve).unwrap_err(), Error::NotBased);
    }

    #[test]
    fn constant_loop_gets_single_basepoint_cell() {
        let m = ManifoldModel::new(ModelKind::Sphere);
        let c = Cover::sphere_tetra(&m);
        let l = Loop::constant(&m);
        let sub = assign_charts_interval(&c, l.curve(), &AssignOptions::default()).unwrap();
        assert_eq!(sub.breaks, vec![0.0, 1.0]);
        assert_eq!(sub.charts, vec![0]);
    }

    #[test]
    fn rect_assignment_is_certified_on_resampling() {
        let m = ManifoldModel::new(ModelKind::Sphere);
        let cover = Cover::sphere_tetra(&m);
        let d = DEFAULT_COLLAR;
        let cyl = Cylinder::new(&m, d, move |s, t| pole_circle(collar(s, d) * PI, collar(t, d) * (2.0 * PI))).unwrap();
        let opts = AssignOptions::default();
        let a = assign_charts_interval(&cover, cyl.start_loop().curve(), &opts).unwrap();
        let b = assign_charts_interval(&cover, cyl.end_loop().curve(), &opts).unwrap();
        let rect = assign_charts_rect(&cover, &cyl, &a, &b, &opts).unwrap();
        assert!(certify_rect(&cover, &cyl, &rect, 4 * opts.density) > 0.0);
        for r in 0..rect.ns() {
            assert_eq!(rect.chart(r, 0), 0);
            assert_eq!(rect.chart(r, rect.nt() - 1), 0);
        }
    }

    #[test]
    fn max_depth_is_reported() {
        let m = ManifoldModel::new(ModelKind::Sphere);
        let cover = Cover::sphere_tetra(&m);
        let curve = Curve::new(DEFAULT_COLLAR, move |t| pole_circle(Jet::constant(2.0), collar(t, DEFAULT_COLLAR) * (2.0 * PI)));
        let opts = AssignOptions { max_depth: 1, ..Default::default() };
        assert_eq!(assign_charts_interval(&cover, &curve, &opts), Err(Error::MaxDepthExceeded(1)));
    }
}
