//! Rebuilding Čech data from a holonomy functor through a basepoint
//! scaffold, and the round trip back to holonomies.
//!
//! The oracle only ever sees cylinders. Every scaffold cylinder is a chain
//! of legs with a fixed chart per column, so the oracle's discretisation is
//! a smooth function of the probe parameters and finite differences of
//! oracle values are meaningful.

use crate::catgroup::{self, Morphism};
use crate::cech::TwistedBundle;
use crate::dual::{Jet, Real};
use crate::error::{Error, Result};
use crate::forms::{FdField, Field, LocalForm};
use crate::geometry::{
    assign_charts_path, collar, cst3, geodesic, smoothstep, AssignOptions, ChartShape, Cover, Curve, Cylinder,
    IntervalSubdivision, ManifoldModel, ModelKind, RectSubdivision, Vec3, P3, DEFAULT_COLLAR,
};
use crate::holonomy::{holonomy_functor, HolonomyOptions};
use crate::lie::{c, eye, scalar, CMat, CentralExtension, GroupElement, Tag, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

type LegFn = Arc<dyn Fn(Jet<2>, Jet<2>) -> P3<Jet<2>> + Send + Sync>;

/// One stretch of a scaffold loop, `(σ, τ) ↦ point` with `σ` the homotopy
/// parameter. Cells are in the raw leg parameter `x`, where `τ = smoothstep(x)`.
#[derive(Clone)]
struct Leg {
    f: LegFn,
    cells: Vec<(f64, f64, usize)>,
}

impl Leg {
    fn single(chart: usize, f: impl Fn(Jet<2>, Jet<2>) -> P3<Jet<2>> + Send + Sync + 'static) -> Leg {
        Leg { f: Arc::new(f), cells: vec![(0.0, 1.0, chart)] }
    }

    fn reversed(&self) -> Leg {
        let f = self.f.clone();
        let cells = self.cells.iter().rev().map(|&(a, b, ch)| (1.0 - b, 1.0 - a, ch)).collect();
        Leg { f: Arc::new(move |s, t| f(s, -t + 1.0)), cells }
    }

    fn shifted(&self, n: Vec3) -> Leg {
        if n == Vec3::zeros() {
            return self.clone();
        }
        let f = self.f.clone();
        Leg { f: Arc::new(move |s, t| add3(f(s, t), &n)), cells: self.cells.clone() }
    }
}

fn add3<S: Real>(p: P3<S>, n: &Vec3) -> P3<S> {
    [p[0] + n.x, p[1] + n.y, p[2] + n.z]
}

fn retract3<S: Real>(kind: ModelKind, p: P3<S>) -> P3<S> {
    match kind {
        ModelKind::Sphere => {
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            [p[0] / n, p[1] / n, p[2] / n]
        }
        _ => p,
    }
}

/// `retract(y + a·v + b·w)`.
fn offset<S: Real>(kind: ModelKind, y: &Vec3, v: &Vec3, w: &Vec3, a: S, b: S) -> P3<S> {
    retract3(kind, [a * v.x + b * w.x + y.x, a * v.y + b * w.y + y.y, a * v.z + b * w.z + y.z])
}

/// A cylinder together with the fixed subdivisions it is evaluated on.
#[derive(Clone, Debug)]
pub struct StagedCylinder {
    pub cylinder: Cylinder,
    pub start: IntervalSubdivision,
    pub end: IntervalSubdivision,
    pub rect: RectSubdivision,
}

fn stage(model: &ManifoldModel, legs: Vec<Leg>, d: f64, rows: usize) -> Result<StagedCylinder> {
    let k = legs.len();
    let w = (1.0 - 2.0 * d) / k as f64;
    let mut breaks = vec![0.0, d];
    let mut charts = vec![0];
    for (m, leg) in legs.iter().enumerate() {
        for &(_, b, ch) in &leg.cells {
            breaks.push(d + w * (m as f64 + b));
            charts.push(ch);
        }
    }
    *breaks.last_mut().unwrap() = 1.0 - d;
    breaks.push(1.0);
    charts.push(0);
    let sub = IntervalSubdivision { breaks, charts };
    let mut s_breaks = vec![0.0, d];
    for r in 1..rows {
        s_breaks.push(d + (1.0 - 2.0 * d) * r as f64 / rows as f64);
    }
    s_breaks.extend([1.0 - d, 1.0]);
    let ns = s_breaks.len() - 1;
    let rect = RectSubdivision {
        t_breaks: sub.breaks.clone(),
        s_breaks,
        charts: (0..ns).flat_map(|_| sub.charts.iter().copied()).collect(),
    };
    let cylinder = Cylinder::new(model, d, move |s, t| {
        let sig = collar(s, d);
        let x = (t - d) / (1.0 - 2.0 * d) * k as f64;
        let m = (x.value().floor().max(0.0) as usize).min(k - 1);
        (legs[m].f)(sig, smoothstep(x - m as f64))
    })?;
    Ok(StagedCylinder { cylinder, start: sub.clone(), end: sub, rect })
}

/// Anchors, fixed paths from the basepoint and the within-chart path
/// families used to probe a holonomy functor.
#[derive(Clone)]
pub struct BasepointScaffold {
    pub model: ManifoldModel,
    pub cover: Arc<Cover>,
    /// `x_i`.
    pub anchors: Vec<Vec3>,
    /// `x_ij` for `i < j`.
    pub pair_anchors: BTreeMap<(usize, usize), Vec3>,
    paths: Vec<Leg>,
    pub collar: f64,
    /// Interior rows of every staged rectangle grid.
    pub rows: usize,
}

impl std::fmt::Debug for BasepointScaffold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BasepointScaffold")
            .field("anchors", &self.anchors)
            .field("pair_anchors", &self.pair_anchors)
            .field("collar", &self.collar)
            .finish()
    }
}

fn chart_anchor(shape: &ChartShape) -> Vec3 {
    match shape {
        ChartShape::Cap { center, .. } => *center,
        ChartShape::Square { center, .. } => Vec3::new(center.0, center.1, 0.0),
        ChartShape::Box { lo, hi, .. } => (lo + hi) * 0.5,
    }
}

impl BasepointScaffold {
    pub fn new(model: &ManifoldModel, cover: Arc<Cover>) -> Result<BasepointScaffold> {
        let kind = model.kind;
        let anchors: Vec<Vec3> = cover.charts.iter().map(|ch| chart_anchor(&ch.shape)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let probes: Vec<Vec3> = (0..20_000).map(|_| model.random_point(&mut rng)).collect();
        let mut pair_anchors = BTreeMap::new();
        for &(i, j) in &cover.pairs {
            let depth = |p: &Vec3| cover.charts[i].depth(p).min(cover.charts[j].depth(p));
            let best = probes
                .iter()
                .copied()
                .max_by(|a, b| depth(a).total_cmp(&depth(b)))
                .filter(|p| depth(p) > 0.0)
                .ok_or_else(|| Error::PreconditionViolated(format!("no anchor found in overlap {i}{j}")))?;
            pair_anchors.insert((i, j), best);
        }
        let star = model.basepoint;
        let mut paths = Vec::new();
        for (i, &xi) in anchors.iter().enumerate() {
            let curve = Curve::new(0.0, move |x: Jet<1>| geodesic(kind, cst3(&star), cst3(&xi), smoothstep(x)));
            let sub = assign_charts_path(&cover, &curve, &AssignOptions::default(), (Some(0), Some(i)))?;
            paths.push(Leg {
                f: Arc::new(move |_s, t| geodesic(kind, cst3(&star), cst3(&xi), t)),
                cells: sub.cells().collect(),
            });
        }
        Ok(BasepointScaffold { model: model.clone(), cover, anchors, pair_anchors, paths, collar: DEFAULT_COLLAR, rows: 2 })
    }

    /// Smallest depth of a fixed path inside the chart of its cell.
    pub fn certify(&self, samples: usize) -> f64 {
        let mut worst = f64::INFINITY;
        for leg in &self.paths {
            for &(a, b, ch) in &leg.cells {
                for k in 0..=samples {
                    let x = a + (b - a) * k as f64 / samples as f64;
                    let p = (leg.f)(Jet::constant(0.0), smoothstep(Jet::constant(x)));
                    worst = worst.min(self.cover.charts[ch].depth(&Vec3::new(p[0].v, p[1].v, p[2].v)));
                }
            }
        }
        worst
    }

    /// The lift of `p` closest to `near` (only the torus has several).
    fn lift_near(&self, p: &Vec3, near: &Vec3) -> Vec3 {
        match self.model.kind {
            ModelKind::Torus => {
                let d = near - p;
                p + Vec3::new(d.x.round(), d.y.round(), 0.0)
            }
            _ => *p,
        }
    }

    pub fn pair_anchor(&self, i: usize, j: usize) -> Result<Vec3> {
        self.pair_anchors
            .get(&(i.min(j), i.max(j)))
            .copied()
            .ok_or_else(|| Error::PreconditionViolated(format!("charts {i} and {j} do not overlap")))
    }

    /// `γ_i` from the basepoint to the lift `a` of `x_i`.
    fn gamma(&self, i: usize, a: &Vec3) -> Leg {
        self.paths[i].shifted(a - self.anchors[i])
    }

    fn require(&self, chart: usize, p: &Vec3, step: f64) -> Result<()> {
        if self.cover.charts[chart].contains(p, 0.0) {
            Ok(())
        } else {
            Err(Error::StepTooLarge { chart, step })
        }
    }

    /// `c_ij(y)`: from `ℓ_ij(x_ij)` to `ℓ_ij(y) = (* → x_i → y → x_j → *)`,
    /// moving the middle point along the geodesic from `x_ij` to `y`.
    pub fn transition_cylinder(&self, i: usize, j: usize, y: &Vec3) -> Result<StagedCylinder> {
        let kind = self.model.kind;
        let (ci, cj) = (&self.cover.charts[i], &self.cover.charts[j]);
        if !(ci.contains(y, 0.0) && cj.contains(y, 0.0)) {
            return Err(Error::PreconditionViolated(format!("point is not in the overlap of charts {i} and {j}")));
        }
        let ai = self.anchors[i];
        let yi = self.lift_near(y, &ai);
        let aj = self.lift_near(&self.anchors[j], &yi);
        let z0 = self.lift_near(&self.pair_anchor(i, j)?, &yi);
        let legs = vec![
            self.gamma(i, &ai),
            Leg::single(i, move |s, t| geodesic(kind, cst3(&ai), geodesic(kind, cst3(&z0), cst3(&yi), s), t)),
            Leg::single(j, move |s, t| geodesic(kind, geodesic(kind, cst3(&z0), cst3(&yi), s), cst3(&aj), t)),
            self.gamma(j, &aj).reversed(),
        ];
        stage(&self.model, legs, self.collar, self.rows)
    }

    /// From `(* → x_i → y → x_i → *)` to the loop that also runs the short
    /// path `q(u) = retract(y + u·v + u²·bend)` for `u ∈ [0, t]` before
    /// returning. `q'(0) = v` whatever the bend.
    pub fn connection_cylinder(&self, i: usize, y: &Vec3, v: &Vec3, bend: &Vec3, t: f64) -> Result<StagedCylinder> {
        let kind = self.model.kind;
        let ai = self.anchors[i];
        let yi = self.lift_near(y, &ai);
        self.require(i, &yi, 0.0)?;
        for k in 0..=8 {
            let u = t * k as f64 / 8.0;
            let q: P3<f64> = offset(kind, &yi, v, bend, u, u * u);
            self.require(i, &Vec3::new(q[0], q[1], q[2]), (t * v.norm()).abs())?;
        }
        let (v, bend) = (*v, *bend);
        let q = move |u: Jet<2>| offset(kind, &yi, &v, &bend, u, u * u);
        let legs = vec![
            self.gamma(i, &ai),
            Leg::single(i, move |_s, tau| geodesic(kind, cst3(&ai), cst3(&yi), tau)),
            Leg::single(i, move |s, tau| q(s * tau * t)),
            Leg::single(i, move |s, tau| geodesic(kind, q(s * t), cst3(&ai), tau)),
            self.gamma(i, &ai).reversed(),
        ];
        stage(&self.model, legs, self.collar, self.rows)
    }

    /// Cone sweeping the small parallelogram `y + ρ[0,1]v + ρ[0,1]w`, entered
    /// from `x_i`.
    pub fn curving_cylinder(&self, i: usize, y: &Vec3, v: &Vec3, w: &Vec3, rho: f64) -> Result<StagedCylinder> {
        let kind = self.model.kind;
        let ai = self.anchors[i];
        let yi = self.lift_near(y, &ai);
        for (a, b) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)] {
            let q: P3<f64> = offset(kind, &yi, v, w, a * rho, b * rho);
            self.require(i, &Vec3::new(q[0], q[1], q[2]), rho * (v.norm() + w.norm()))?;
        }
        let (v, w) = (*v, *w);
        let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)];
        let mut legs = vec![self.gamma(i, &ai), Leg::single(i, move |_s, tau| geodesic(kind, cst3(&ai), cst3(&yi), tau))];
        for side in corners.windows(2) {
            let (p, q) = (side[0], side[1]);
            legs.push(Leg::single(i, move |s, tau| {
                let a = (tau * (q.0 - p.0) + p.0) * s * rho;
                let b = (tau * (q.1 - p.1) + p.1) * s * rho;
                offset(kind, &yi, &v, &w, a, b)
            }));
        }
        legs.push(Leg::single(i, move |_s, tau| geodesic(kind, cst3(&yi), cst3(&ai), tau)));
        legs.push(self.gamma(i, &ai).reversed());
        stage(&self.model, legs, self.collar, self.rows)
    }
}

/// Anything that assigns a morphism class to a scaffold cylinder.
pub trait HolonomyOracle: Send + Sync {
    fn extension(&self) -> Arc<CentralExtension>;
    fn eval(&self, c: &StagedCylinder) -> Result<Morphism>;
}

/// The holonomy functor of a stored bundle, evaluated on the staged
/// subdivisions with fixed step counts.
pub struct BundleOracle {
    pub bundle: TwistedBundle,
    pub opts: HolonomyOptions,
    calls: AtomicUsize,
}

impl BundleOracle {
    pub fn new(bundle: TwistedBundle, opts: HolonomyOptions) -> BundleOracle {
        BundleOracle { bundle, opts, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl HolonomyOracle for BundleOracle {
    fn extension(&self) -> Arc<CentralExtension> {
        self.bundle.ext.clone()
    }

    fn eval(&self, c: &StagedCylinder) -> Result<Morphism> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        crate::holonomy::holonomy_functor_with(&self.bundle, &c.cylinder, &c.start, &c.end, &c.rect, &self.opts)
            .map(|v| v.morphism)
            .map_err(|e| Error::OracleFailure(e.to_string()))
    }
}

/// No adaptive doubling, so oracle values vary smoothly with the probe.
pub fn oracle_options() -> HolonomyOptions {
    HolonomyOptions { steps_per_unit: 128, max_doublings: 0, quad_order: 6, panels_per_unit: 8, ..Default::default() }
}

#[derive(Clone, Copy, Debug)]
pub struct ReconstructOptions {
    pub tol_rec: f64,
    /// Step of the central difference defining `A_i`.
    pub fd_step: f64,
    /// Largest of the parallelogram scales used for the curving.
    pub rho: f64,
    /// Step used to differentiate the reconstructed connection.
    pub curl_step: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions { tol_rec: 1e-4, fd_step: 1e-4, rho: 0.005, curl_step: 1e-3 }
    }
}

/// One reconstructed curving value and the pieces it came from.
#[derive(Clone, Debug)]
pub struct CurvingSample {
    /// Three-scale fit of `log(e⁻¹e')/ρ²` over shrinking parallelograms.
    pub k: CMat,
    /// Curvature of the reconstructed connection on the same pair.
    pub l: CMat,
    pub f: C64,
    /// Size of the non-central part of `k - l`.
    pub residual: f64,
}

/// Reconstruction state: oracle, scaffold and the base representatives.
pub struct Reconstruction {
    pub oracle: Arc<dyn HolonomyOracle>,
    pub scaffold: Arc<BasepointScaffold>,
    pub ext: Arc<CentralExtension>,
    pub opts: ReconstructOptions,
    bases: BTreeMap<(usize, usize), CMat>,
}

/// `log M` for `M` near the identity.
fn log_near_identity(m: &CMat) -> Result<CMat> {
    let z = m - eye(m.nrows());
    if z.norm() > 0.5 {
        return Err(Error::ReconstructionFailed(format!("loop holonomy too far from identity ({:.3e})", z.norm())));
    }
    let mut out = z.clone();
    let mut pow = z.clone();
    for k in 2..80 {
        pow = &pow * &z;
        let term = &pow * c(if k % 2 == 0 { -1.0 } else { 1.0 } / k as f64, 0.0);
        out += &term;
        if term.norm() < 1e-18 {
            break;
        }
    }
    Ok(out)
}

impl Reconstruction {
    /// Fixes the base representative `(e, e)` of `H(c_ij(x_ij))` for `i < j`
    /// and `(e⁻¹, e⁻¹)` for the reversed pair.
    pub fn new(oracle: Arc<dyn HolonomyOracle>, scaffold: Arc<BasepointScaffold>, opts: ReconstructOptions) -> Result<Reconstruction> {
        let ext = oracle.extension();
        let mut bases = BTreeMap::new();
        for (&(i, j), x) in &scaffold.pair_anchors {
            let m = oracle.eval(&scaffold.transition_cylinder(i, j, x)?)?;
            let e = m.source.m.clone();
            bases.insert((j, i), e.adjoint());
            bases.insert((i, j), e);
        }
        Ok(Reconstruction { oracle, scaffold, ext, opts, bases })
    }

    fn ratio(&self, m: &Morphism) -> CMat {
        m.source.m.adjoint() * &m.target.m
    }

    /// `e_ij(y)`: the second entry of the representative of `H(c_ij(y))`
    /// whose first entry is the base representative.
    pub fn transition(&self, i: usize, j: usize, y: &Vec3) -> Result<CMat> {
        let base = self.bases.get(&(i, j)).ok_or_else(|| Error::PreconditionViolated(format!("no overlap {i}{j}")))?;
        let m = self.oracle.eval(&self.scaffold.transition_cylinder(i, j, y)?)?;
        let (h, _) = self.ext.fiber_normalize(&GroupElement::new(Tag::E, base.clone()), &m.source, self.opts.tol_rec)?;
        Ok(&m.target.m * self.ext.include(h.m[(0, 0)].conj()))
    }

    /// `h_ijk(y)`, the `H`-part of `e_ij e_jk e_ki`.
    pub fn cocycle(&self, i: usize, j: usize, k: usize, y: &Vec3) -> Result<C64> {
        let prod = self.transition(i, j, y)? * self.transition(j, k, y)? * self.transition(k, i, y)?;
        let (h, r) = self.ext.central_part(&prod);
        if r > self.opts.tol_rec {
            return Err(Error::NotCentralFiber { residual: r });
        }
        Ok(h)
    }

    /// `A_i(v) = d/dt e(t)⁻¹e'(t)` at `t = 0`, by central difference.
    pub fn connection(&self, i: usize, y: &Vec3, v: &Vec3) -> Result<CMat> {
        self.connection_along(i, y, v, &Vec3::zeros())
    }

    /// As [`Reconstruction::connection`] with the short path bent by `bend`.
    pub fn connection_along(&self, i: usize, y: &Vec3, v: &Vec3, bend: &Vec3) -> Result<CMat> {
        let n = self.ext.e.dim();
        if v.norm() == 0.0 {
            return Ok(CMat::zeros(n, n));
        }
        let h = self.opts.fd_step;
        let plus = self.oracle.eval(&self.scaffold.connection_cylinder(i, y, v, bend, h)?)?;
        let minus = self.oracle.eval(&self.scaffold.connection_cylinder(i, y, v, bend, -h)?)?;
        Ok((self.ratio(&plus) - self.ratio(&minus)) / c(2.0 * h, 0.0))
    }

    /// `A_ij(v)` from the gluing identity `ι(A_ij) = A_j − Ad(e⁻¹)A_i − e⁻¹de`.
    pub fn abelian(&self, i: usize, j: usize, y: &Vec3, v: &Vec3) -> Result<C64> {
        if v.norm() == 0.0 {
            return Ok(c(0.0, 0.0));
        }
        let model = &self.scaffold.model;
        let h = self.opts.fd_step;
        let e = self.transition(i, j, y)?;
        let de = (self.transition(i, j, &model.retraction_curve(y, v, h))?
            - self.transition(i, j, &model.retraction_curve(y, v, -h))?)
            / c(2.0 * h, 0.0);
        let einv = e.adjoint();
        let x = self.connection(j, y, v)? - &einv * self.connection(i, y, v)? * &e - &einv * de;
        Ok(self.ext.algebra_central_part(&x))
    }

    /// `F_i(v, w)`: the central part of `K − L`, with `K` fitted from three
    /// parallelogram scales and `L` the curvature of the reconstructed
    /// connection.
    pub fn curving(&self, i: usize, y: &Vec3, v: &Vec3, w: &Vec3) -> Result<CurvingSample> {
        let n = self.ext.e.dim();
        if v.norm() == 0.0 || w.norm() == 0.0 {
            let z = CMat::zeros(n, n);
            return Ok(CurvingSample { k: z.clone(), l: z, f: c(0.0, 0.0), residual: 0.0 });
        }
        // The fit is not bilinear in (v, w); work with unit vectors and scale back.
        let scale = c(v.norm() * w.norm(), 0.0);
        let (v, w) = (&v.normalize(), &w.normalize());
        let rho = self.opts.rho;
        let fit = |r: f64| -> Result<CMat> {
            let m = self.oracle.eval(&self.scaffold.curving_cylinder(i, y, v, w, r)?)?;
            Ok(log_near_identity(&self.ratio(&m))? / c(r * r, 0.0))
        };
        // Richardson over ρ, ρ/2, ρ/4 removes the O(ρ) and O(ρ²) terms.
        let k = (fit(0.25 * rho)? * c(8.0, 0.0) - fit(0.5 * rho)? * c(6.0, 0.0) + fit(rho)?) / c(3.0, 0.0);

        let kind = self.scaffold.model.kind;
        let yi = self.scaffold.lift_near(y, &self.scaffold.anchors[i]);
        // A evaluated on a coordinate field of the patch retract(y + αv + βw).
        let pull = |a: f64, b: f64, dir: usize| -> Result<CMat> {
            let p = offset(kind, &yi, v, w, Jet::<2>::var(a, 0), Jet::<2>::var(b, 1));
            let pt = Vec3::new(p[0].v, p[1].v, p[2].v);
            let tangent = Vec3::new(p[0].d[dir], p[1].d[dir], p[2].d[dir]);
            self.connection(i, &pt, &tangent)
        };
        let hc = self.opts.curl_step;
        let d_alpha = (pull(hc, 0.0, 1)? - pull(-hc, 0.0, 1)?) / c(2.0 * hc, 0.0);
        let d_beta = (pull(0.0, hc, 0)? - pull(0.0, -hc, 0)?) / c(2.0 * hc, 0.0);
        let (av, aw) = (pull(0.0, 0.0, 0)?, pull(0.0, 0.0, 1)?);
        let l = d_alpha - d_beta + &av * &aw - &aw * &av;
        let diff = &k - &l;
        let f = self.ext.algebra_central_part(&diff);
        let residual = (&diff - self.ext.include_algebra(f)).norm() * scale.re;
        Ok(CurvingSample { k: k * scale, l: l * scale, f: f * scale, residual })
    }

    /// A bundle whose fields call back into the reconstruction on demand.
    pub fn bundle(self: &Arc<Self>) -> TwistedBundle {
        let s = &self.scaffold;
        let model = s.model.clone();
        let ext = self.ext.clone();
        let (ne, ng) = (ext.e.dim(), ext.g.dim());
        let mut b = TwistedBundle::new("reconstructed", model.clone(), s.cover.clone(), ext.clone());
        for &(i, j) in &s.cover.pairs {
            let r = self.clone();
            let e: Field = Arc::new(FdField {
                n: ne,
                model: model.clone(),
                step: self.opts.fd_step,
                f: Arc::new(move |p| r.transition(i, j, p)),
            });
            b.set_transition(i, j, e, None);
            let r = self.clone();
            b.set_a_ij(i, j, LocalForm::callable(&model, 1, 1, Tag::H, move |p, vs| Ok(scalar(r.abelian(i, j, p, &vs[0])?))));
        }
        for &(i, j, k) in &s.cover.triples {
            let r = self.clone();
            let h: Field = Arc::new(FdField {
                n: 1,
                model: model.clone(),
                step: self.opts.fd_step,
                f: Arc::new(move |p| Ok(scalar(r.cocycle(i, j, k, p)?))),
            });
            b.set_h(i, j, k, h);
        }
        for i in 0..s.cover.len() {
            let r = self.clone();
            let a = LocalForm::callable(&model, 1, ne, Tag::E, move |p, vs| r.connection(i, p, &vs[0]));
            let (r, x) = (self.clone(), ext.clone());
            let d = LocalForm::callable(&model, 1, ng, Tag::G, move |p, vs| Ok(x.project_algebra(&r.connection(i, p, &vs[0])?)));
            let r = self.clone();
            let f = LocalForm::callable(&model, 2.min(model.dim()), 1, Tag::H, move |p, vs| {
                Ok(scalar(r.curving(i, p, &vs[0], &vs[1])?.f))
            });
            b.set_chart(i, d, a, f);
        }
        b.fd_step = self.opts.curl_step;
        b
    }
}

/// A reconstructed transition with its independently reconstructed reverse.
#[derive(Clone, Debug)]
pub struct TransitionSample {
    pub i: usize,
    pub j: usize,
    pub y: Vec3,
    pub e: CMat,
    /// `|e_ji(y)·e_ij(y) − 1|`.
    pub antisymmetry: f64,
}

/// Samples `e_ij` at the given points of the overlaps.
pub fn reconstruct_transitions(rec: &Reconstruction, samples: &[(usize, usize, Vec3)]) -> Result<Vec<TransitionSample>> {
    let mut out = Vec::with_capacity(samples.len());
    for &(i, j, y) in samples {
        let e = rec.transition(i, j, &y)?;
        let back = rec.transition(j, i, &y)?;
        let antisymmetry = (&back * &e - eye(e.nrows())).norm();
        if antisymmetry > rec.opts.tol_rec {
            return Err(Error::ReconstructionFailed(format!("e_{j}{i}·e_{i}{j} differs from 1 by {antisymmetry:.3e}")));
        }
        out.push(TransitionSample { i, j, y, e, antisymmetry });
    }
    Ok(out)
}

/// `h_ijk(y)` from sampled transitions on a triple overlap.
pub fn reconstruct_cocycle(ext: &CentralExtension, e_ij: &CMat, e_jk: &CMat, e_ki: &CMat, tol: f64) -> Result<C64> {
    let (h, r) = ext.central_part(&(e_ij * e_jk * e_ki));
    if r > tol {
        return Err(Error::NotCentralFiber { residual: r });
    }
    Ok(h)
}

/// One battery entry of a round trip.
#[derive(Clone, Debug, Serialize)]
pub struct RoundTripItem {
    pub name: String,
    pub residual: f64,
    pub unconjugated: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    pub items: Vec<RoundTripItem>,
    pub max_deviation: f64,
    pub tol: f64,
    pub pass: bool,
    /// Whether a non-trivial overall conjugation was fitted.
    pub conjugated: bool,
    pub oracle_calls: usize,
}

#[derive(Clone, Debug)]
pub struct RoundTripOptions {
    pub oracle: HolonomyOptions,
    /// Used for the holonomies of the reconstructed bundle.
    pub recompute: HolonomyOptions,
    pub reconstruct: ReconstructOptions,
    pub tol: f64,
}

impl Default for RoundTripOptions {
    fn default() -> Self {
        RoundTripOptions {
            oracle: oracle_options(),
            recompute: HolonomyOptions { steps_per_unit: 24, max_doublings: 0, quad_order: 3, panels_per_unit: 2, ..Default::default() },
            reconstruct: ReconstructOptions::default(),
            tol: 1e-3,
        }
    }
}

/// `g ∈ G` with `π(x) g ≈ g π(y)` for all pairs, by least squares; lifted
/// to `E`.
fn fit_conjugator(ext: &CentralExtension, pairs: &[(CMat, CMat)]) -> Result<CMat> {
    let n = ext.g.dim();
    let mut rows: Vec<CMat> = Vec::new();
    for (x, y) in pairs {
        let (gx, gy) = (ext.project(x), ext.project(y));
        // vec(X g − g Y) = (I ⊗ X − Yᵀ ⊗ I) vec(g)
        rows.push(eye(n).kronecker(&gx) - gy.transpose().kronecker(&eye(n)));
    }
    let mut sys = CMat::zeros(rows.len() * n * n, n * n);
    for (k, r) in rows.iter().enumerate() {
        sys.view_mut((k * n * n, 0), (n * n, n * n)).copy_from(r);
    }
    let svd = sys.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::ReconstructionFailed("svd failed".into()))?;
    let kmin = (0..svd.singular_values.len()).min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b])).unwrap();
    let v: Vec<C64> = vt.row(kmin).iter().map(|z| z.conj()).collect();
    let mut g = CMat::from_fn(n, n, |r, col| v[col * n + r]);
    let big = g.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(c(1.0, 0.0));
    g *= big.conj() / big.norm();
    let svd = g.svd(true, true);
    let mut u = svd.u.unwrap() * svd.v_t.unwrap();
    if n == 3 {
        u = u.map(|z| c(z.re, 0.0));
        if u.determinant().re < 0.0 {
            u = -u;
        }
    }
    ext.section(&u)
}

/// Rebuilds the bundle from its own holonomy functor and compares the
/// recomputed functor with the original on a battery of cylinders, up to
/// one overall conjugation.
pub fn round_trip_check(bundle: &TwistedBundle, battery: &[(String, Cylinder)], opts: &RoundTripOptions) -> Result<EquivalenceReport> {
    let scaffold = Arc::new(BasepointScaffold::new(&bundle.model, bundle.cover.clone())?);
    let oracle = Arc::new(BundleOracle::new(bundle.clone(), opts.oracle.clone()));
    let rec = Arc::new(Reconstruction::new(oracle.clone(), scaffold, opts.reconstruct)?);
    let rebuilt = rec.bundle();
    let exact = HolonomyOptions::default();
    let mut pairs = Vec::new();
    for (name, cyl) in battery {
        let orig = holonomy_functor(bundle, cyl, &exact)?.morphism;
        let new = holonomy_functor(&rebuilt, cyl, &opts.recompute)
            .map_err(|e| Error::ReconstructionFailed(format!("{name}: {e}")))?
            .morphism;
        pairs.push((name.clone(), orig, new));
    }
    let compare = |lift: &GroupElement| -> Result<Vec<f64>> {
        pairs
            .iter()
            .map(|(_, o, n)| Ok(catgroup::morphism_eq(&bundle.ext, &catgroup::conjugate(o, lift)?, n, opts.tol).residual))
            .collect()
    };
    let ne = bundle.ext.e.dim();
    let plain = compare(&GroupElement::identity(Tag::E, ne))?;
    let mut residuals = plain.clone();
    let mut conjugated = false;
    if plain.iter().any(|&r| r > opts.tol) {
        let obs: Vec<(CMat, CMat)> = pairs
            .iter()
            .flat_map(|(_, o, n)| [(o.source.m.clone(), n.source.m.clone()), (o.target.m.clone(), n.target.m.clone())])
            .collect();
        if let Ok(k) = fit_conjugator(&bundle.ext, &obs) {
            let fitted = compare(&GroupElement::new(Tag::E, k))?;
            if fitted.iter().cloned().fold(0.0, f64::max) < plain.iter().cloned().fold(0.0, f64::max) {
                residuals = fitted;
                conjugated = true;
            }
        }
    }
    let items: Vec<RoundTripItem> = pairs
        .iter()
        .zip(residuals.iter().zip(&plain))
        .map(|((name, _, _), (&residual, &unconjugated))| RoundTripItem { name: name.clone(), residual, unconjugated })
        .collect();
    let max_deviation = residuals.iter().cloned().fold(0.0, f64::max);
    Ok(EquivalenceReport {
        items,
        max_deviation,
        tol: opts.tol,
        pass: max_deviation <= opts.tol,
        conjugated,
        oracle_calls: oracle.calls(),
    })
}
