//! Named parametric loops and cylinders per model.

use crate::dual::{Jet, Real};
use crate::error::{Error, Result};
use crate::geometry::{
    chain, collar, cst3, fold_map, geodesic, pole_circle, smoothstep, spherical, warp_map, Curve, Cylinder, Loop,
    ManifoldModel, ModelKind, DEFAULT_COLLAR, P3,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const D: f64 = DEFAULT_COLLAR;

fn rot_z<S: Real>(p: P3<S>, g: S) -> P3<S> {
    let (s, c) = (g.sin(), g.cos());
    [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]
}

fn need(model: &ManifoldModel, kind: ModelKind, name: &str) -> Result<()> {
    if model.kind != kind {
        return Err(Error::Config(format!("`{name}` is not defined on the {:?} model", model.kind)));
    }
    Ok(())
}

/// Circle through the north pole of angular diameter `2β`, rotated about the
/// z-axis by `γ`.
pub fn pole_circle_loop(model: &ManifoldModel, beta: f64, gamma: f64) -> Result<Loop> {
    need(model, ModelKind::Sphere, "pole-circle")?;
    Loop::new(
        model,
        Curve::new(D, move |t| rot_z(pole_circle(Jet::constant(beta), collar(t, D) * (2.0 * PI)), Jet::constant(gamma))),
    )
}

/// Down the meridian to polar angle `θ`, once around the latitude, back up.
pub fn latitude_loop(model: &ManifoldModel, theta: f64) -> Result<Loop> {
    need(model, ModelKind::Sphere, "latitude")?;
    Loop::new(
        model,
        Curve::new(D, move |t| {
            let u = collar(t, D) * 3.0;
            let n = cst3(&model_north());
            let p = spherical(Jet::constant(theta), Jet::constant(0.0));
            if u.v < 1.0 {
                geodesic(ModelKind::Sphere, n, p, smoothstep(u))
            } else if u.v < 2.0 {
                spherical(Jet::constant(theta), smoothstep(u - 1.0) * (2.0 * PI))
            } else {
                geodesic(ModelKind::Sphere, p, n, smoothstep(u - 2.0))
            }
        }),
    )
}

fn model_north() -> crate::geometry::Vec3 {
    crate::geometry::Vec3::new(0.0, 0.0, 1.0)
}

/// Loop of winding `(p, q)` on the torus.
pub fn winding_loop(model: &ManifoldModel, p: i32, q: i32) -> Result<Loop> {
    need(model, ModelKind::Torus, "winding")?;
    let b = model.basepoint;
    Loop::new(
        model,
        Curve::new(D, move |t| {
            let x = collar(t, D);
            [x * p as f64 + b.x, x * q as f64 + b.y, Jet::constant(0.0)]
        }),
    )
}

/// Circle of radius `r` through the basepoint of the plane, centred in
/// direction `angle` from it.
pub fn plane_circle_loop(model: &ManifoldModel, r: f64, angle: f64) -> Result<Loop> {
    need(model, ModelKind::Plane, "plane-circle")?;
    let b = model.basepoint;
    Loop::new(
        model,
        Curve::new(D, move |t| {
            let phi = collar(t, D) * (2.0 * PI) + angle + PI;
            [phi.cos() * r + b.x + r * angle.cos(), phi.sin() * r + b.y + r * angle.sin(), Jet::constant(0.0)]
        }),
    )
}

/// Polygon loop through the given points on any model.
pub fn polygon_loop(model: &ManifoldModel, pts: &[crate::geometry::Vec3]) -> Result<Loop> {
    let mut all = vec![model.basepoint];
    all.extend_from_slice(pts);
    all.push(model.basepoint);
    let kind = model.kind;
    Loop::new(
        model,
        Curve::new(D, move |t| {
            let ps: Vec<P3<Jet<1>>> = all.iter().map(cst3).collect();
            chain(kind, &ps, collar(t, D))
        }),
    )
}

// ---------------------------------------------------------------------------
// Cylinders.

/// Band of pole circles from `(β₀, γ₀)` to `(β₁, γ₁)`; `β₀ = 0` starts at the
/// constant loop.
pub fn sphere_band(model: &ManifoldModel, b0: f64, b1: f64, g0: f64, g1: f64) -> Result<Cylinder> {
    need(model, ModelKind::Sphere, "band")?;
    Cylinder::new(model, D, move |s, t| {
        let x = collar(s, D);
        let beta = x * (b1 - b0) + b0;
        let gamma = x * (g1 - g0) + g0;
        rot_z(pole_circle(beta, collar(t, D) * (2.0 * PI)), gamma)
    })
}

/// Closed cylinder sweeping the whole sphere `m` times (`m = 0` is constant).
pub fn sphere_sweep(model: &ManifoldModel, m: i32) -> Result<Cylinder> {
    need(model, ModelKind::Sphere, "sweep")?;
    if m == 0 {
        return Ok(Cylinder::constant(&Loop::constant(model)));
    }
    let mut c = single_sweep(model, m > 0)?;
    for _ in 1..m.abs() {
        c = c.vertical(&single_sweep(model, m > 0)?)?;
    }
    Ok(c)
}

fn single_sweep(model: &ManifoldModel, positive: bool) -> Result<Cylinder> {
    Cylinder::new(model, D, move |s, t| {
        let x = collar(s, D);
        let x = if positive { x } else { -x + 1.0 };
        pole_circle(x * PI, collar(t, D) * (2.0 * PI))
    })
}

/// Band from the pole circle `(β, γ)` to itself, pushed out by a non-thin bump
/// of size `amp` in the middle.
pub fn sphere_bump(model: &ManifoldModel, beta: f64, gamma: f64, amp: f64) -> Result<Cylinder> {
    need(model, ModelKind::Sphere, "bump")?;
    Cylinder::new(model, D, move |s, t| {
        let y = collar(t, D);
        let x = collar(s, D);
        let bs = (x * PI).sin();
        let bt = (y * PI).sin();
        let beta_s = bs * bt * amp + beta;
        let gamma_s = (x * (2.0 * PI)).sin() * bt * (0.5 * amp) + gamma;
        rot_z(pole_circle(beta_s, y * (2.0 * PI)), gamma_s)
    })
}

/// Cone from the basepoint onto the commutator loop `a^p b^q a^-p b^-q`, the
/// boundary of the lifted rectangle `[0, p] × [0, q]`; it covers the torus
/// `pq` times. `bump` adds a non-thin push in the interior.
pub fn torus_filling(model: &ManifoldModel, p: i32, q: i32, bump: f64) -> Result<Cylinder> {
    need(model, ModelKind::Torus, "torus-filling")?;
    let b = model.basepoint;
    let corners = [(0.0, 0.0), (p as f64, 0.0), (p as f64, q as f64), (0.0, q as f64), (0.0, 0.0)];
    Cylinder::new(model, D, move |s, t| {
        let x = collar(s, D);
        let y = collar(t, D);
        let pts: Vec<P3<Jet<2>>> = corners.iter().map(|c| [Jet::constant(c.0), Jet::constant(c.1), Jet::constant(0.0)]).collect();
        let r = chain(ModelKind::Torus, &pts, y);
        let w = (x * PI).sin() * (y * PI).sin() * (y * PI).sin() * bump;
        [x * r[0] + b.x + w * 0.5, x * r[1] + b.y + w, Jet::constant(0.0)]
    })
}

/// The commutator loop bounding [`torus_filling`].
pub fn commutator_loop(model: &ManifoldModel, p: i32, q: i32) -> Result<Loop> {
    Ok(torus_filling(model, p, q, 0.0)?.end_loop())
}

/// Homotopy on the torus between `(1, 0)`-type loops pushed sideways by
/// `a0` and `a1` in the middle, with an optional non-thin interior bump.
pub fn torus_push(model: &ManifoldModel, a0: f64, a1: f64, bump: f64) -> Result<Cylinder> {
    need(model, ModelKind::Torus, "torus-push")?;
    let b = model.basepoint;
    Cylinder::new(model, D, move |s, t| {
        let x = collar(s, D);
        let y = collar(t, D);
        let a = x * (a1 - a0) + a0;
        let sy = (y * PI).sin();
        let w = (x * PI).sin() * sy * sy * (y * (2.0 * PI)).sin() * bump;
        [y + b.x + w, a * sy * sy + b.y + w * 0.5, Jet::constant(0.0)]
    })
}

/// Family of plane circles from radius `r0` to `r1`.
pub fn plane_band(model: &ManifoldModel, r0: f64, r1: f64, angle: f64) -> Result<Cylinder> {
    need(model, ModelKind::Plane, "plane-band")?;
    let b = model.basepoint;
    Cylinder::new(model, D, move |s, t| {
        let r = collar(s, D) * (r1 - r0) + r0;
        let phi = collar(t, D) * (2.0 * PI) + angle + PI;
        [phi.cos() * r + r * angle.cos() + b.x, phi.sin() * r + r * angle.sin() + b.y, Jet::constant(0.0)]
    })
}

/// Thin reparametrisations used to probe invariance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ThinDeformation {
    /// Monotone warp of `s` and `t`.
    Warp { s: f64, t: f64 },
    /// Non-monotone fold of `s`.
    Fold { amplitude: f64 },
}

pub fn deform(c: &Cylinder, d: ThinDeformation) -> Cylinder {
    let delta = c.collar;
    match d {
        ThinDeformation::Warp { s, t } => c.reparam(move |x| warp_map(x, delta, s), move |y| warp_map(y, delta, t)),
        ThinDeformation::Fold { amplitude } => c.reparam(move |x| fold_map(x, delta, amplitude), |y| y),
    }
}

/// A loop description that can be stored in configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LoopSpec {
    Constant,
    PoleCircle { beta: f64, #[serde(default)] gamma: f64 },
    Latitude { theta: f64 },
    Winding { p: i32, q: i32 },
    PlaneCircle { r: f64, #[serde(default)] angle: f64 },
    Polygon { points: Vec<[f64; 3]> },
}

impl LoopSpec {
    pub fn build(&self, model: &ManifoldModel) -> Result<Loop> {
        match self {
            LoopSpec::Constant => Ok(Loop::constant(model)),
            LoopSpec::PoleCircle { beta, gamma } => pole_circle_loop(model, *beta, *gamma),
            LoopSpec::Latitude { theta } => latitude_loop(model, *theta),
            LoopSpec::Winding { p, q } => winding_loop(model, *p, *q),
            LoopSpec::PlaneCircle { r, angle } => plane_circle_loop(model, *r, *angle),
            LoopSpec::Polygon { points } => {
                let pts: Vec<_> = points.iter().map(|p| model.retract(&crate::geometry::Vec3::new(p[0], p[1], p[2]))).collect();
                polygon_loop(model, &pts)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CylinderSpec {
    ConstantAt { r#loop: LoopSpec },
    Band { beta0: f64, beta1: f64, #[serde(default)] gamma0: f64, #[serde(default)] gamma1: f64 },
    Sweep { m: i32 },
    Bump { beta: f64, #[serde(default)] gamma: f64, amp: f64 },
    TorusFilling { p: i32, q: i32, #[serde(default)] bump: f64 },
    TorusPush { a0: f64, a1: f64, #[serde(default)] bump: f64 },
    PlaneBand { r0: f64, r1: f64, #[serde(default)] angle: f64 },
    Vertical { first: Box<CylinderSpec>, second: Box<CylinderSpec> },
    Horizontal { left: Box<CylinderSpec>, right: Box<CylinderSpec> },
    Deformed { base: Box<CylinderSpec>, deformation: ThinDeformation },
}

impl CylinderSpec {
    pub fn build(&self, model: &ManifoldModel) -> Result<Cylinder> {
        match self {
            CylinderSpec::ConstantAt { r#loop } => Ok(Cylinder::constant(&r#loop.build(model)?)),
            CylinderSpec::Band { beta0, beta1, gamma0, gamma1 } => sphere_band(model, *beta0, *beta1, *gamma0, *gamma1),
            CylinderSpec::Sweep { m } => sphere_sweep(model, *m),
            CylinderSpec::Bump { beta, gamma, amp } => sphere_bump(model, *beta, *gamma, *amp),
            CylinderSpec::TorusFilling { p, q, bump } => torus_filling(model, *p, *q, *bump),
            CylinderSpec::TorusPush { a0, a1, bump } => torus_push(model, *a0, *a1, *bump),
            CylinderSpec::PlaneBand { r0, r1, angle } => plane_band(model, *r0, *r1, *angle),
            CylinderSpec::Vertical { first, second } => first.build(model)?.vertical(&second.build(model)?),
            CylinderSpec::Horizontal { left, right } => Ok(left.build(model)?.horizontal(&right.build(model)?)),
            CylinderSpec::Deformed { base, deformation } => Ok(deform(&base.build(model)?, *deformation)),
        }
    }
}

/// Default test cylinders for a model.
pub fn default_cylinders(kind: ModelKind) -> Vec<CylinderSpec> {
    match kind {
        ModelKind::Sphere => vec![
            CylinderSpec::Band { beta0: 0.0, beta1: 0.6, gamma0: 0.0, gamma1: 0.0 },
            CylinderSpec::Band { beta0: 0.3, beta1: 1.2, gamma0: 0.2, gamma1: 1.0 },
            CylinderSpec::Band { beta0: 1.0, beta1: 2.2, gamma0: -0.5, gamma1: 0.4 },
            CylinderSpec::Band { beta0: 2.5, beta1: 0.4, gamma0: 2.0, gamma1: 3.5 },
            CylinderSpec::Band { beta0: 0.0, beta1: 2.8, gamma0: 0.0, gamma1: -1.5 },
            CylinderSpec::Sweep { m: 1 },
            CylinderSpec::Bump { beta: 0.8, gamma: 0.3, amp: 0.4 },
            CylinderSpec::Bump { beta: 1.9, gamma: -1.0, amp: -0.5 },
            CylinderSpec::Band { beta0: 1.5, beta1: 1.5, gamma0: 0.0, gamma1: 2.0 },
            CylinderSpec::Band { beta0: 0.2, beta1: 3.0, gamma0: 4.0, gamma1: 0.0 },
        ],
        ModelKind::Torus => vec![
            CylinderSpec::TorusFilling { p: 1, q: 1, bump: 0.0 },
            CylinderSpec::TorusFilling { p: 1, q: 1, bump: 0.2 },
            CylinderSpec::TorusFilling { p: 2, q: 1, bump: -0.1 },
            CylinderSpec::TorusFilling { p: -1, q: 1, bump: 0.1 },
            CylinderSpec::TorusPush { a0: 0.0, a1: 0.3, bump: 0.0 },
            CylinderSpec::TorusPush { a0: -0.2, a1: 0.4, bump: 0.15 },
            CylinderSpec::TorusPush { a0: 0.5, a1: -0.5, bump: -0.2 },
            CylinderSpec::TorusPush { a0: 0.1, a1: 0.1, bump: 0.25 },
            CylinderSpec::ConstantAt { r#loop: LoopSpec::Winding { p: 1, q: 1 } },
            CylinderSpec::ConstantAt { r#loop: LoopSpec::Winding { p: 2, q: -1 } },
        ],
        ModelKind::Plane => vec![
            CylinderSpec::PlaneBand { r0: 0.0, r1: 0.3, angle: 0.5 },
            CylinderSpec::PlaneBand { r0: 0.1, r1: 0.4, angle: 0.9 },
            CylinderSpec::PlaneBand { r0: 0.45, r1: 0.2, angle: 0.7 },
        ],
        ModelKind::Cube => vec![CylinderSpec::ConstantAt { r#loop: LoopSpec::Constant }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_entries_are_based_and_sit() {
        for kind in [ModelKind::Sphere, ModelKind::Torus, ModelKind::Plane] {
            let m = ManifoldModel::new(kind);
            for spec in default_cylinders(kind) {
                let c = spec.build(&m).unwrap();
                c.check(&m).unwrap();
                for s in [0.0, 0.37, 1.0] {
                    assert!(crate::geometry::Loop::new(&m, c.slice(s).0.clone()).is_ok());
                }
            }
        }
        let m = ManifoldModel::new(ModelKind::Sphere);
        latitude_loop(&m, 1.1).unwrap();
    }

    #[test]
    fn sweep_is_closed_and_band_ends_match_circles() {
        let m = ManifoldModel::new(ModelKind::Sphere);
        let c = sphere_sweep(&m, 1).unwrap();
        assert!(c.start_loop().is_constant(&m, 64));
        assert!(c.end_loop().is_constant(&m, 64));
        let b = sphere_band(&m, 0.3, 1.1, 0.5, -0.2).unwrap();
        let l = pole_circle_loop(&m, 1.1, -0.2).unwrap();
        for k in 0..=32 {
            let t = k as f64 / 32.0;
            assert!((b.point(1.0, t) - l.point(t)).norm() < 1e-14);
        }
    }

    #[test]
    fn torus_pushes_compose_vertically() {
        let m = ManifoldModel::new(ModelKind::Torus);
        let a = torus_push(&m, 0.0, 0.2, 0.1).unwrap();
        let b = torus_push(&m, 0.2, -0.1, 0.0).unwrap();
        assert!(a.vertical(&b).is_ok());
        let f = torus_filling(&m, 2, 1, 0.0).unwrap();
        assert!(f.start_loop().is_constant(&m, 32));
        assert!((f.point(1.0, 0.5) - m.basepoint - crate::geometry::Vec3::new(2.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn specs_round_trip_through_json() {
        let s = CylinderSpec::Deformed {
            base: Box::new(CylinderSpec::Band { beta0: 0.1, beta1: 0.2, gamma0: 0.0, gamma1: 0.0 }),
            deformation: ThinDeformation::Fold { amplitude: 0.3 },
        };
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<CylinderSpec>(&j).unwrap(), s);
    }
}
