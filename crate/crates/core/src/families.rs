//! Built-in bundle families and the example registry.

use crate::cech::TwistedBundle;
use crate::dual::CDual;
use crate::error::{Error, Result};
use crate::forms::{self, jet_field, Field, LocalForm, MatJet};
use crate::geometry::{Cover, ManifoldModel, ModelKind, Vec3};
use crate::lie::{c, eye, pauli, CMat, CentralExtension, ExtensionKind, Tag, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

fn cst(z: C64) -> CDual {
    CDual::constant(z)
}

fn re(x: f64) -> CDual {
    CDual::real(x, 0.0)
}

fn diag2(a: CDual, b: CDual) -> MatJet {
    let z = re(0.0);
    MatJet::from_duals(2, &[a, z, z, b])
}

fn const_field(m: CMat) -> Field {
    forms::constant(m)
}

/// All transitions identity, all forms zero.
pub fn trivial(model: &ManifoldModel, kind: ExtensionKind) -> TwistedBundle {
    let cover = Arc::new(Cover::default_for(model));
    let ext = Arc::new(CentralExtension::new(kind));
    let mut b = TwistedBundle::new("trivial", model.clone(), cover.clone(), ext.clone());
    let (ne, ng) = (ext.e.dim(), ext.g.dim());
    for &(i, j) in &cover.pairs {
        b.set_transition(i, j, const_field(eye(ne)), Some(const_field(eye(ng))));
        b.set_a_ij(i, j, LocalForm::zero(model, 1, 1, Tag::H));
    }
    for &(i, j, k) in &cover.triples {
        b.set_h(i, j, k, const_field(eye(1)));
    }
    for i in 0..cover.len() {
        b.set_chart(
            i,
            LocalForm::zero(model, 1, ng, Tag::G),
            LocalForm::zero(model, 1, ne, Tag::E),
            LocalForm::zero(model, 2.min(model.dim()), 1, Tag::H),
        );
    }
    b
}

/// Integer offset between the chart-local lifts of charts `i` and `j`.
fn lift_offset(cover: &Cover, model: &ManifoldModel, i: usize, j: usize) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let p = cover
        .sample_region(model, &[i, j], &mut rng)
        .ok_or_else(|| Error::PreconditionViolated(format!("empty overlap {i}{j}")))?;
    let a = cover.charts[i].localize(&p);
    let b = cover.charts[j].localize(&p);
    Ok(((a.x - b.x).round(), (a.y - b.y).round()))
}

/// Flat twisted bundle on the torus with constant cocycle in `μ_n`:
/// `G = U(1)` with flat connection `i(a du + b dv)`, H-part of the
/// transitions `exp(iκ m_ij v)` with `κ = 2πk/n`.
pub fn torus_flat(k: i64, n: i64, a: f64, bb: f64) -> Result<TwistedBundle> {
    if n == 0 {
        return Err(Error::Config("cocycle order n must be non-zero".into()));
    }
    let model = ManifoldModel::new(ModelKind::Torus);
    let cover = Arc::new(Cover::default_for(&model));
    let ext = Arc::new(CentralExtension::new(ExtensionKind::SplitTorus));
    let kappa = 2.0 * PI * k as f64 / n as f64;
    let mut b = TwistedBundle::new("torus-flat", model.clone(), cover.clone(), ext.clone());
    for &(i, j) in &cover.pairs {
        let (mu, _) = lift_offset(&cover, &model, i, j)?;
        let e = jet_field(2, Some(cover.charts[i].clone()), move |q| {
            Ok(diag2((q[1] * cst(c(0.0, kappa * mu))).exp(), re(1.0)))
        });
        b.set_transition(i, j, e, Some(const_field(eye(1))));
        b.set_a_ij(i, j, LocalForm::zero(&model, 1, 1, Tag::H));
    }
    for &(i, j, k2) in &cover.triples {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = cover.sample_region(&model, &[i, j, k2], &mut rng).unwrap();
        let prod = b.e_at(i, j, &p)? * b.e_at(j, k2, &p)? * b.e_at(k2, i, &p)?;
        let (h, _) = ext.central_part(&prod);
        b.set_h(i, j, k2, const_field(crate::lie::scalar(h)));
    }
    let d_comps = vec![const_field(crate::lie::scalar(c(0.0, a))), const_field(crate::lie::scalar(c(0.0, bb)))];
    for i in 0..cover.len() {
        let d = LocalForm::from_components(&model, 1, Tag::G, d_comps.clone())?;
        let ch = cover.charts[i].clone();
        let a_comps = vec![
            const_field(CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.0, 0.0), c(0.0, a)]))),
            jet_field(2, Some(ch), move |q| Ok(diag2(q[0] * cst(c(0.0, -kappa)), re(bb) * cst(c(0.0, 1.0))))),
        ];
        let af = LocalForm::from_components(&model, 1, Tag::E, a_comps)?;
        b.set_chart(i, d, af, LocalForm::zero(&model, 2, 1, Tag::H));
    }
    Ok(b)
}

/// Antisymmetric constants used for the H-parts of the sphere transitions.
pub const SPHERE_PHASES: [[f64; 4]; 4] =
    [[0.0, 0.7, -0.4, 0.3], [-0.7, 0.0, 0.5, -0.6], [0.4, -0.5, 0.0, 0.9], [-0.3, 0.6, -0.9, 0.0]];

/// `ψ = x + 0.5y + 0.3z`.
pub const PSI: [f64; 3] = [1.0, 0.5, 0.3];

fn psi(q: &[CDual; 3]) -> CDual {
    q[0] * re(PSI[0]) + q[1] * re(PSI[1]) + q[2] * re(PSI[2])
}

fn phase(cij: f64, q: &[CDual; 3]) -> CDual {
    (psi(q) * cst(c(0.0, cij))).exp()
}

/// `-i c dψ`.
fn a_ij_form(model: &ManifoldModel, cij: f64) -> Result<LocalForm> {
    let comps = PSI.iter().map(|w| const_field(crate::lie::scalar(c(0.0, -cij * w)))).collect();
    LocalForm::from_components(model, 1, Tag::H, comps)
}

fn area_form(model: &ManifoldModel, coef: impl Fn(&[CDual; 3]) -> CDual + Send + Sync + Clone + 'static) -> Result<LocalForm> {
    // σ = z dx∧dy − y dx∧dz + x dy∧dz
    let comps: Vec<Field> = (0..3)
        .map(|k| {
            let f = coef.clone();
            jet_field(1, None, move |q| {
                let g = match k {
                    0 => q[2],
                    1 => -q[1],
                    _ => q[0],
                };
                Ok(MatJet::scalar(f(q) * g))
            })
        })
        .collect();
    LocalForm::from_components(model, 2, Tag::H, comps)
}

fn sphere_h(b: &mut TwistedBundle) {
    let triples = b.cover.triples.clone();
    for (i, j, k) in triples {
        let s = SPHERE_PHASES[i][j] + SPHERE_PHASES[j][k] + SPHERE_PHASES[k][i];
        b.set_h(i, j, k, jet_field(1, None, move |q| Ok(MatJet::scalar(phase(s, q)))));
    }
}

/// Monopole of charge `n` on the sphere: `G = U(1)`, Dirac potentials on the
/// north cap and the three southern caps, `F = (in/2)·area`.
pub fn sphere_monopole(n: i64) -> Result<TwistedBundle> {
    let model = ManifoldModel::new(ModelKind::Sphere);
    let cover = Arc::new(Cover::default_for(&model));
    let ext = Arc::new(CentralExtension::new(ExtensionKind::SplitTorus));
    let mut b = TwistedBundle::new(&format!("monopole-{n}"), model.clone(), cover.clone(), ext);
    let nf = n as f64;
    for &(i, j) in &cover.pairs {
        let cij = SPHERE_PHASES[i][j];
        let g_of = move |q: &[CDual; 3]| -> CDual {
            if i == 0 {
                let w = q[0] - q[1] * cst(c(0.0, 1.0));
                let rho = (q[0] * q[0] + q[1] * q[1]).sqrt();
                (w / rho).powi(n as i32)
            } else {
                re(1.0)
            }
        };
        let e = jet_field(2, None, move |q| Ok(diag2(phase(cij, q), g_of(q))));
        let g = jet_field(1, None, move |q| Ok(MatJet::scalar(g_of(q))));
        b.set_transition(i, j, e, Some(g));
        b.set_a_ij(i, j, a_ij_form(&model, cij)?);
    }
    sphere_h(&mut b);
    for i in 0..cover.len() {
        let sign = if i == 0 { 1.0 } else { -1.0 };
        let pot = move |q: &[CDual; 3], k: usize| -> CDual {
            let den = re(1.0) + q[2] * re(sign);
            let num = match k {
                0 => -q[1],
                1 => q[0],
                _ => re(0.0),
            };
            num / den * cst(c(0.0, sign * nf / 2.0))
        };
        let d: Vec<Field> = (0..3).map(|k| jet_field(1, None, move |q| Ok(MatJet::scalar(pot(q, k))))).collect();
        let a: Vec<Field> = (0..3).map(|k| jet_field(2, None, move |q| Ok(diag2(re(0.0), pot(q, k))))).collect();
        let f = area_form(&model, move |_| cst(c(0.0, nf / 2.0)))?;
        b.set_chart(
            i,
            LocalForm::from_components(&model, 1, Tag::G, d)?,
            LocalForm::from_components(&model, 1, Tag::E, a)?,
            f,
        );
    }
    Ok(b)
}

/// `X_a = iσ_a/2`.
fn su2_gen(a: usize) -> CMat {
    pauli(a).map(|z| z * c(0.0, 0.5))
}

/// Global `L(SU(2))` potential `Σ X_a ω_a` with fixed polynomial coefficients.
fn pu2_potential(p: &Vec3, v: &Vec3) -> CMat {
    let (x, y, z) = (p.x, p.y, p.z);
    let w = [
        0.4 * v.x + 0.3 * z * v.y,
        -0.2 * x * v.y + 0.5 * y * v.z,
        0.3 * y * v.x + 0.2 * v.z + 0.1 * x * v.x,
    ];
    (0..3).fold(CMat::zeros(2, 2), |acc, a| acc + su2_gen(a) * c(w[a], 0.0))
}

/// Chart gauges `exp(f₁X₁)exp(f₂X₂)` with affine `f`.
fn pu2_gauge(i: usize) -> impl Fn(&[CDual; 3]) -> MatJet + Send + Sync + Clone + 'static {
    let k = i as f64;
    move |q: &[CDual; 3]| {
        let f1 = q[0] * re(0.3 + 0.1 * k) + re(0.2 * k);
        let f2 = q[1] * re(-0.4 + 0.2 * k) + q[2] * re(0.25) + re(-0.1 * k);
        MatJet::exp_of(&su2_gen(0), f1).mul(&MatJet::exp_of(&su2_gen(1), f2))
    }
}

/// `U(1) → U(2) → PU(2)` over the sphere, topologically trivial but with
/// non-trivial chart gauges, non-constant cocycle and curving
/// `F = i(0.3 + 0.2x)·area`.
pub fn sphere_pu2() -> Result<TwistedBundle> {
    let model = ManifoldModel::new(ModelKind::Sphere);
    let cover = Arc::new(Cover::default_for(&model));
    let ext = Arc::new(CentralExtension::new(ExtensionKind::ScalarU2));
    let mut b = TwistedBundle::new("pu2", model.clone(), cover.clone(), ext.clone());
    for &(i, j) in &cover.pairs {
        let cij = SPHERE_PHASES[i][j];
        let (ki, kj) = (pu2_gauge(i), pu2_gauge(j));
        let e = jet_field(2, None, move |q| Ok(ki(q).inv_unitary().mul(&kj(q)).scale(phase(cij, q))));
        b.set_transition(i, j, e, None);
        b.set_a_ij(i, j, a_ij_form(&model, cij)?);
    }
    sphere_h(&mut b);
    for i in 0..cover.len() {
        let k = pu2_gauge(i);
        let a = LocalForm::callable(&model, 1, 2, Tag::E, move |p, vs| {
            let j = k(&forms::dual_coords(p, &vs[0]));
            let ki = j.val.adjoint();
            Ok(&ki * pu2_potential(p, &vs[0]) * &j.val + j.log_derivative())
        });
        let a2 = a.clone();
        let x = ext.clone();
        let d = LocalForm::callable(&model, 1, 3, Tag::G, move |p, vs| Ok(x.project_algebra(&a2.eval(p, vs)?)));
        let f = area_form(&model, |q| (re(0.3) + q[0] * re(0.2)) * cst(c(0.0, 1.0)))?;
        b.set_chart(i, d, a, f);
    }
    Ok(b)
}

/// Single-chart gerbe on the cube with curving `F = i·u dv∧dw`, so that
/// `dF = i du∧dv∧dw`.
pub fn cube_curving() -> Result<TwistedBundle> {
    let model = ManifoldModel::new(ModelKind::Cube);
    let cover = Arc::new(Cover::default_for(&model));
    let ext = Arc::new(CentralExtension::new(ExtensionKind::Gerbe));
    let mut b = TwistedBundle::new("cube-curving", model.clone(), cover, ext);
    let f = LocalForm::parse_scalar(&model, 2, Tag::H, &["0", "0", "i*u"], None)?;
    b.set_chart(0, LocalForm::zero(&model, 1, 1, Tag::G), LocalForm::zero(&model, 1, 1, Tag::E), f);
    Ok(b)
}

/// Abelian gerbe with a single global `A` and `F` on every chart, trivial
/// transitions and cocycle. The torus is refused: its ambient coordinates
/// are not periodic functions.
pub fn custom_abelian(kind: ModelKind, a: &[String], f: &[String]) -> Result<TwistedBundle> {
    if kind == ModelKind::Torus {
        return Err(Error::Config("custom-abelian does not support the torus model".into()));
    }
    let model = ManifoldModel::new(kind);
    let mut b = trivial(&model, ExtensionKind::Gerbe);
    b.name = "custom-abelian".into();
    let a_srcs: Vec<&str> = a.iter().map(String::as_str).collect();
    let f_srcs: Vec<&str> = f.iter().map(String::as_str).collect();
    let af = LocalForm::parse_scalar(&model, 1, Tag::E, &a_srcs, None)?;
    let ff = LocalForm::parse_scalar(&model, 2, Tag::H, &f_srcs, None)?;
    for i in 0..b.cover.len() {
        b.set_chart(i, LocalForm::zero(&model, 1, 1, Tag::G), af.clone(), ff.clone());
    }
    Ok(b)
}

/// Registry entry for a named example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    Trivial {
        model: ModelKind,
        #[serde(default = "default_ext")]
        extension: ExtensionKind,
    },
    TorusFlat {
        k: i64,
        n: i64,
        #[serde(default)]
        a: f64,
        #[serde(default)]
        b: f64,
    },
    Monopole {
        n: i64,
    },
    Pu2,
    CubeCurving,
    /// Gerbe with a global connection and curving given as component
    /// expressions in the model's ambient coordinates.
    CustomAbelian {
        model: ModelKind,
        a: Vec<String>,
        f: Vec<String>,
    },
}

fn default_ext() -> ExtensionKind {
    ExtensionKind::SplitTorus
}

impl FamilySpec {
    pub fn build(&self) -> Result<TwistedBundle> {
        match self {
            FamilySpec::Trivial { model, extension } => Ok(trivial(&ManifoldModel::new(*model), *extension)),
            FamilySpec::TorusFlat { k, n, a, b } => torus_flat(*k, *n, *a, *b),
            FamilySpec::Monopole { n } => sphere_monopole(*n),
            FamilySpec::Pu2 => sphere_pu2(),
            FamilySpec::CubeCurving => cube_curving(),
            FamilySpec::CustomAbelian { model, a, f } => custom_abelian(*model, a, f),
        }
    }

    pub fn model(&self) -> ModelKind {
        match self {
            FamilySpec::Trivial { model, .. } => *model,
            FamilySpec::TorusFlat { .. } => ModelKind::Torus,
            FamilySpec::CubeCurving => ModelKind::Cube,
            FamilySpec::CustomAbelian { model, .. } => *model,
            _ => ModelKind::Sphere,
        }
    }
}

/// Named examples with a one-line description.
pub fn examples() -> Vec<(&'static str, FamilySpec, &'static str)> {
    vec![
        (
            "trivial-sphere",
            FamilySpec::Trivial { model: ModelKind::Sphere, extension: ExtensionKind::SplitTorus },
            "identity transitions, zero forms, tetrahedral cover of the sphere",
        ),
        (
            "trivial-torus",
            FamilySpec::Trivial { model: ModelKind::Torus, extension: ExtensionKind::ScalarU2 },
            "trivial U(2) bundle on the 3x3 torus grid",
        ),
        (
            "trivial-plane",
            FamilySpec::Trivial { model: ModelKind::Plane, extension: ExtensionKind::Gerbe },
            "trivial gerbe on the square",
        ),
        ("torus-flat", FamilySpec::TorusFlat { k: 1, n: 3, a: 0.7, b: -0.4 }, "flat twisted bundle, cocycle in μ_3"),
        ("monopole", FamilySpec::Monopole { n: 1 }, "charge-1 monopole, F = (i/2)·area"),
        ("monopole-2", FamilySpec::Monopole { n: 2 }, "charge-2 monopole"),
        ("monopole-minus-1", FamilySpec::Monopole { n: -1 }, "charge −1 monopole"),
        ("pu2", FamilySpec::Pu2, "U(2) → PU(2) twisted bundle on the sphere"),
        ("cube-curving", FamilySpec::CubeCurving, "gerbe on the cube with dF = i du∧dv∧dw"),
        (
            "custom-plane",
            FamilySpec::CustomAbelian {
                model: ModelKind::Plane,
                a: vec!["0".into(), "i*u".into()],
                f: vec!["i*(1 + u*v)".into()],
            },
            "abelian gerbe on the square from expressions: A = i u dv, F = i(1 + uv) du∧dv",
        ),
    ]
}

pub fn example(name: &str) -> Result<FamilySpec> {
    examples()
        .into_iter()
        .find(|(n, _, _)| *n == name)
        .map(|(_, s, _)| s)
        .ok_or_else(|| Error::UnknownIdentifier(name.into()))
}
