//! Holonomy of twisted bundles: `H₀` and `H₁` along loops, the surface factor
//! `ε` of a cylinder, and the functor `c ↦ [H₁(ℓ), ε(c)·H₁(ℓ')]`.
//!
//! Grid conventions for `ε` (parameter square with `t` horizontal and `s`
//! vertical, rows over `s`):
//! - faces contribute `∫∫ F_α(∂_t c, ∂_s c) dt ds`;
//! - the horizontal edge at `s_k` between the cell `β` above and `α` below
//!   contributes `∫ A_βα(∂_t c) dt`, `t` increasing;
//! - the vertical edge at `t_j` between `α` on the left and `β` on the right
//!   contributes `∫ A_αβ(∂_s c) ds`, `s` increasing;
//! - an interior vertex with cells `LL, LR, UR, UL` around it contributes
//!   `log h(LL, LR, UR) − log h(LL, UL, UR)`.
//!
//! All contributions are summed in `L(H)` and exponentiated once.

use crate::catgroup::{self, Morphism};
use crate::cech::TwistedBundle;
use crate::error::{Error, Result};
use crate::forms::gauss_legendre;
use crate::geometry::{
    assign_charts_interval, assign_charts_rect, AssignOptions, Curve, Cylinder, IntervalSubdivision, Loop,
    RectSubdivision, Vec3,
};
use crate::lie::{c, eye, path_ordered_exp, CMat, GroupElement, Tag, C64};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolonomyOptions {
    /// Initial Magnus steps per unit of loop parameter; each cell doubles its
    /// step count until two successive products differ by at most `cell_tol`.
    pub steps_per_unit: usize,
    pub cell_tol: f64,
    pub max_doublings: usize,
    /// Gauss–Legendre nodes per panel.
    pub quad_order: usize,
    /// Quadrature panels per unit of parameter.
    pub panels_per_unit: usize,
    pub assign: AssignOptions,
    /// Recompute at half resolution and report the difference.
    pub estimate_error: bool,
}

impl Default for HolonomyOptions {
    fn default() -> Self {
        HolonomyOptions {
            steps_per_unit: 256,
            cell_tol: 1e-11,
            max_doublings: 8,
            quad_order: 8,
            panels_per_unit: 16,
            assign: AssignOptions::default(),
            estimate_error: false,
        }
    }
}

impl HolonomyOptions {
    /// Low-resolution settings, adequate at the `1e-4` level.
    pub fn coarse() -> Self {
        HolonomyOptions { steps_per_unit: 64, cell_tol: 1e-8, quad_order: 6, panels_per_unit: 6, ..Default::default() }
    }

    /// Half the steps and panels, without adaptive doubling.
    pub fn halved(&self) -> Self {
        HolonomyOptions {
            steps_per_unit: (self.steps_per_unit / 2).max(1),
            max_doublings: 0,
            panels_per_unit: (self.panels_per_unit / 2).max(1),
            estimate_error: false,
            ..*self
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CellRecord {
    pub t0: f64,
    pub t1: f64,
    pub chart: usize,
}

#[derive(Clone, Debug)]
pub struct HolonomyResult {
    pub value: GroupElement,
    pub subdivision: IntervalSubdivision,
    pub cells: Vec<CellRecord>,
    /// Difference to the half-resolution value, when requested.
    pub error_estimate: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Layer {
    E,
    G,
}

pub fn assign_loop(b: &TwistedBundle, l: &Loop, opts: &HolonomyOptions) -> Result<IntervalSubdivision> {
    assign_charts_interval(&b.cover, l.curve(), &opts.assign)
}

fn chart_check(b: &TwistedBundle, chart: usize, p: &Vec3) -> Result<()> {
    if b.cover.charts[chart].contains(p, 0.0) {
        Ok(())
    } else {
        Err(Error::ChartMismatch { chart })
    }
}

fn transport(b: &TwistedBundle, curve: &Curve, sub: &IntervalSubdivision, layer: Layer, opts: &HolonomyOptions) -> Result<CMat> {
    let n = match layer {
        Layer::E => b.ext.e.dim(),
        Layer::G => b.ext.g.dim(),
    };
    let mut u = eye(n);
    let cells: Vec<(f64, f64, usize)> = sub.cells().collect();
    for (k, &(t0, t1, ch)) in cells.iter().enumerate() {
        let form = match layer {
            Layer::E => b.a_form(ch)?,
            Layer::G => b.d_form(ch)?,
        };
        let mut steps = (((t1 - t0) * opts.steps_per_unit as f64).ceil() as usize).max(2);
        let pexp = |steps: usize| {
            path_ordered_exp(
                |t| {
                    let (p, v) = curve.eval(t);
                    chart_check(b, ch, &p)?;
                    let a = form.eval(&p, &[v])?;
                    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                        return Err(Error::DomainError(format!("non-finite connection at t = {t}")));
                    }
                    Ok(a)
                },
                t0,
                t1,
                steps,
                n,
            )
        };
        let mut piece = pexp(steps)?;
        for _ in 0..opts.max_doublings {
            steps *= 2;
            let finer = pexp(steps)?;
            let diff = (&finer - &piece).norm();
            piece = finer;
            if diff <= opts.cell_tol {
                break;
            }
        }
        u *= piece;
        if let Some(&(_, _, next)) = cells.get(k + 1) {
            if next != ch {
                let p = curve.point(t1);
                u *= match layer {
                    Layer::E => b.e_at(ch, next, &p)?,
                    Layer::G => b.g_at(ch, next, &p)?,
                };
            }
        }
    }
    Ok(u)
}

fn run_layer(b: &TwistedBundle, l: &Loop, sub: &IntervalSubdivision, layer: Layer, opts: &HolonomyOptions) -> Result<HolonomyResult> {
    let value = transport(b, l.curve(), sub, layer, opts)?;
    let error_estimate = if opts.estimate_error {
        let coarse = transport(b, l.curve(), sub, layer, &opts.halved())?;
        Some((&coarse - &value).norm())
    } else {
        None
    };
    let tag = if layer == Layer::E { Tag::E } else { Tag::G };
    Ok(HolonomyResult {
        value: GroupElement::new(tag, value),
        subdivision: sub.clone(),
        cells: sub.cells().map(|(t0, t1, chart)| CellRecord { t0, t1, chart }).collect(),
        error_estimate,
    })
}

/// Ordinary holonomy of the `G`-bundle `(g_ij, D_i)` along a based loop.
pub fn hol0(b: &TwistedBundle, l: &Loop, sub: &IntervalSubdivision, opts: &HolonomyOptions) -> Result<HolonomyResult> {
    run_layer(b, l, sub, Layer::G, opts)
}

/// `H₁(ℓ) = ∏ Pexp∫ ℓ*A_i · e_{i,i+1}(ℓ(t_{i+1}))`.
pub fn hol1(b: &TwistedBundle, l: &Loop, sub: &IntervalSubdivision, opts: &HolonomyOptions) -> Result<HolonomyResult> {
    run_layer(b, l, sub, Layer::E, opts)
}

/// Logs of the three layers of `ε` and their exponential.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EpsilonParts {
    pub faces: C64,
    pub edges: C64,
    pub vertices: C64,
    pub log: C64,
    pub value: C64,
}

fn panels(a: f64, b: f64, per_unit: usize) -> usize {
    (((b - a) * per_unit as f64).ceil() as usize).max(1)
}

/// Gauss nodes over `[a, b]` split into panels.
fn nodes(a: f64, b: f64, per_unit: usize, order: usize) -> Vec<(f64, f64)> {
    let n = panels(a, b, per_unit);
    let h = (b - a) / n as f64;
    (0..n).flat_map(|k| gauss_legendre(order, a + k as f64 * h, a + (k + 1) as f64 * h)).collect()
}

/// Doubles the panel density until two successive values agree to `cell_tol`.
/// Two-dimensional integrals are capped at four doublings.
fn refine(opts: &HolonomyOptions, cap: usize, mut f: impl FnMut(usize) -> Result<C64>) -> Result<C64> {
    let mut ppu = opts.panels_per_unit;
    let mut prev = f(ppu)?;
    for _ in 0..opts.max_doublings.min(cap) {
        ppu *= 2;
        let cur = f(ppu)?;
        if (cur - prev).norm() <= opts.cell_tol {
            return Ok(cur);
        }
        prev = cur;
    }
    Ok(prev)
}

pub fn epsilon(b: &TwistedBundle, cyl: &Cylinder, rect: &RectSubdivision, opts: &HolonomyOptions) -> Result<EpsilonParts> {
    let (ns, nt) = (rect.ns(), rect.nt());
    let (tb, sb) = (&rect.t_breaks, &rect.s_breaks);
    let ord = opts.quad_order;
    let mut faces = c(0.0, 0.0);
    for r in 0..ns {
        for j in 0..nt {
            let ch = rect.chart(r, j);
            let f = b.f_form(ch)?;
            faces += refine(opts, 4, |ppu| {
                let tn = nodes(tb[j], tb[j + 1], ppu, ord);
                let mut acc = c(0.0, 0.0);
                for (s, ws) in nodes(sb[r], sb[r + 1], ppu, ord) {
                    for &(t, wt) in &tn {
                        let (p, ds, dt) = cyl.eval(s, t);
                        if ds.norm() == 0.0 || dt.norm() == 0.0 {
                            continue;
                        }
                        chart_check(b, ch, &p)?;
                        acc += f.eval(&p, &[dt, ds])?[(0, 0)] * (ws * wt);
                    }
                }
                Ok(acc)
            })?;
        }
    }

    let mut edges = c(0.0, 0.0);
    for k in 1..ns {
        let s = sb[k];
        for j in 0..nt {
            let (above, below) = (rect.chart(k, j), rect.chart(k - 1, j));
            if above == below {
                continue;
            }
            edges += refine(opts, 8, |ppu| {
                let mut acc = c(0.0, 0.0);
                for (t, w) in nodes(tb[j], tb[j + 1], ppu, ord) {
                    let (p, _, dt) = cyl.eval(s, t);
                    if dt.norm() != 0.0 {
                        acc += b.a_ij_at(above, below, &p, &dt)? * w;
                    }
                }
                Ok(acc)
            })?;
        }
    }
    for j in 1..nt {
        let t = tb[j];
        for r in 0..ns {
            let (left, right) = (rect.chart(r, j - 1), rect.chart(r, j));
            if left == right {
                continue;
            }
            edges += refine(opts, 8, |ppu| {
                let mut acc = c(0.0, 0.0);
                for (s, w) in nodes(sb[r], sb[r + 1], ppu, ord) {
                    let (p, ds, _) = cyl.eval(s, t);
                    if ds.norm() != 0.0 {
                        acc += b.a_ij_at(left, right, &p, &ds)? * w;
                    }
                }
                Ok(acc)
            })?;
        }
    }

    let mut vertices = c(0.0, 0.0);
    for k in 1..ns {
        for j in 1..nt {
            let ll = rect.chart(k - 1, j - 1);
            let lr = rect.chart(k - 1, j);
            let ur = rect.chart(k, j);
            let ul = rect.chart(k, j - 1);
            let p = cyl.point(sb[k], tb[j]);
            vertices += b.ext.h_log(b.h_at(ll, lr, ur, &p)?) - b.ext.h_log(b.h_at(ll, ul, ur, &p)?);
        }
    }

    let log = faces + edges + vertices;
    Ok(EpsilonParts { faces, edges, vertices, log, value: log.exp() })
}

/// Everything computed for one cylinder.
#[derive(Clone, Debug)]
pub struct FunctorValue {
    pub morphism: Morphism,
    pub epsilon: EpsilonParts,
    pub start: HolonomyResult,
    pub end: HolonomyResult,
    pub rect: RectSubdivision,
    pub error_estimate: Option<f64>,
}

/// `[H₁(ℓ), ι(ε(c))·H₁(ℓ')]` with freshly assigned subdivisions.
pub fn holonomy_functor(b: &TwistedBundle, cyl: &Cylinder, opts: &HolonomyOptions) -> Result<FunctorValue> {
    let (sl, el) = (cyl.start_loop(), cyl.end_loop());
    let start = assign_loop(b, &sl, opts)?;
    let end = assign_loop(b, &el, opts)?;
    let rect = assign_charts_rect(&b.cover, cyl, &start, &end, &opts.assign)?;
    holonomy_functor_with(b, cyl, &start, &end, &rect, opts)
}

/// As [`holonomy_functor`] on given subdivisions, which must agree on the
/// collar rows.
pub fn holonomy_functor_with(
    b: &TwistedBundle,
    cyl: &Cylinder,
    start: &IntervalSubdivision,
    end: &IntervalSubdivision,
    rect: &RectSubdivision,
    opts: &HolonomyOptions,
) -> Result<FunctorValue> {
    let h_start = hol1(b, &cyl.start_loop(), start, opts)?;
    let h_end = hol1(b, &cyl.end_loop(), end, opts)?;
    let eps = epsilon(b, cyl, rect, opts)?;
    let target = GroupElement::new(Tag::E, b.ext.include(eps.value) * &h_end.value.m);
    let morphism = Morphism::new(h_start.value.clone(), target)?;
    let error_estimate = if opts.estimate_error {
        let coarse = holonomy_functor_with(b, cyl, start, end, rect, &opts.halved())?;
        Some(catgroup::morphism_eq(&b.ext, &morphism, &coarse.morphism, 0.0).residual)
    } else {
        None
    };
    Ok(FunctorValue { morphism, epsilon: eps, start: h_start, end: h_end, rect: rect.clone(), error_estimate })
}

/// `H^g`: conjugation of a morphism by a lift `e` of `g`.
pub fn conjugate_functor(b: &TwistedBundle, m: &Morphism, g: &GroupElement, lift: &GroupElement, tol: f64) -> Result<Morphism> {
    check_lift(b, g, lift, tol)?;
    catgroup::conjugate(m, lift)
}

/// `g⁻¹·x·g` on objects.
pub fn conjugate_object(x: &GroupElement, g: &GroupElement) -> Result<GroupElement> {
    x.conj(g)
}

fn check_lift(b: &TwistedBundle, g: &GroupElement, lift: &GroupElement, tol: f64) -> Result<()> {
    if g.tag != Tag::G {
        return Err(Error::TagMismatch { expected: Tag::G, found: g.tag });
    }
    let r = (b.ext.project(&lift.m) - &g.m).norm();
    if r > tol {
        return Err(Error::NotSameFiber { residual: r });
    }
    Ok(())
}

/// `tr(ι(ε(c))·H₁(ℓ'))` for a cylinder starting at the constant loop.
pub fn kapustin_trace(b: &TwistedBundle, cyl: &Cylinder, opts: &HolonomyOptions) -> Result<C64> {
    if !cyl.start_loop().is_constant(&b.model, 256) {
        return Err(Error::PreconditionViolated("the start loop of the cylinder is not constant".into()));
    }
    let v = holonomy_functor(b, cyl, opts)?;
    Ok(kapustin_trace_of(&v.morphism))
}

/// The trace of the target of the representative with source `1`.
pub fn kapustin_trace_of(m: &Morphism) -> C64 {
    (m.source.m.adjoint() * &m.target.m).trace()
}
