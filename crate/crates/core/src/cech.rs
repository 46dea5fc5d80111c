//! Twisted principal bundles with connection as Čech data, their validation,
//! gauge transformations and flatness checks.

use crate::error::{Error, Result};
use crate::forms::{self, exterior_derivative, Field, LocalForm, MatJet};
use crate::geometry::{Cover, ManifoldModel, Vec3};
use crate::lie::{c, eye, CMat, CentralExtension, Tag, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::Arc;

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Čech data `(g_ij, e_ij, h_ijk, D_i, A_i, A_ij, F_i)` over a good cover.
///
/// `e`, `g` and `a_ij` are stored for both orders of each overlap; `h` for
/// increasing triples, other orders follow by antisymmetry.
#[derive(Clone)]
pub struct TwistedBundle {
    pub name: String,
    pub model: ManifoldModel,
    pub cover: Arc<Cover>,
    pub ext: Arc<CentralExtension>,
    pub g: BTreeMap<(usize, usize), Field>,
    pub e: BTreeMap<(usize, usize), Field>,
    pub h: BTreeMap<(usize, usize, usize), Field>,
    pub d: Vec<Option<LocalForm>>,
    pub a: Vec<Option<LocalForm>>,
    pub a_ij: BTreeMap<(usize, usize), LocalForm>,
    pub f: Vec<Option<LocalForm>>,
    pub fd_step: f64,
}

impl std::fmt::Debug for TwistedBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TwistedBundle {{ name: {}, charts: {} }}", self.name, self.cover.len())
    }
}

fn sort3(i: usize, j: usize, k: usize) -> ((usize, usize, usize), bool) {
    let mut v = [i, j, k];
    let mut odd = false;
    for a in 0..3 {
        for b in 0..2 - a {
            if v[b] > v[b + 1] {
                v.swap(b, b + 1);
                odd = !odd;
            }
        }
    }
    ((v[0], v[1], v[2]), odd)
}

fn neg_form(f: &LocalForm) -> LocalForm {
    let g = f.clone();
    LocalForm { repr: forms::FormRepr::Callable(Arc::new(move |p, vs| Ok(-g.eval(p, vs)?))), ..f.clone() }
}

impl TwistedBundle {
    pub fn new(name: &str, model: ManifoldModel, cover: Arc<Cover>, ext: Arc<CentralExtension>) -> TwistedBundle {
        let n = cover.len();
        TwistedBundle {
            name: name.into(),
            model,
            cover,
            ext,
            g: BTreeMap::new(),
            e: BTreeMap::new(),
            h: BTreeMap::new(),
            d: vec![None; n],
            a: vec![None; n],
            a_ij: BTreeMap::new(),
            f: vec![None; n],
            fd_step: DEFAULT_FD_STEP,
        }
    }

    /// Sets `e_ij`, `e_ji = e_ij⁻¹` and the matching `g` (default `π ∘ e`).
    pub fn set_transition(&mut self, i: usize, j: usize, e: Field, g: Option<Field>) {
        let g = g.unwrap_or_else(|| forms::project(self.ext.clone(), e.clone()));
        self.e.insert((j, i), forms::inverse(e.clone()));
        self.e.insert((i, j), e);
        self.g.insert((j, i), forms::inverse(g.clone()));
        self.g.insert((i, j), g);
    }

    /// Sets `A_ij` and `A_ji = -A_ij`.
    pub fn set_a_ij(&mut self, i: usize, j: usize, a: LocalForm) {
        self.a_ij.insert((j, i), neg_form(&a));
        self.a_ij.insert((i, j), a);
    }

    /// Sets `h_ijk` for any order of distinct indices.
    pub fn set_h(&mut self, i: usize, j: usize, k: usize, h: Field) {
        let (key, odd) = sort3(i, j, k);
        self.h.insert(key, if odd { forms::inverse(h) } else { h });
    }

    pub fn set_chart(&mut self, i: usize, d: LocalForm, a: LocalForm, f: LocalForm) {
        self.d[i] = Some(d);
        self.a[i] = Some(a);
        self.f[i] = Some(f);
    }

    fn missing(what: &str) -> Error {
        Error::MissingField(what.into())
    }

    pub fn e_field(&self, i: usize, j: usize) -> Result<&Field> {
        self.e.get(&(i, j)).ok_or_else(|| Self::missing(&format!("e_{i}{j}")))
    }

    pub fn e_jet(&self, i: usize, j: usize, p: &Vec3, v: &Vec3) -> Result<MatJet> {
        if i == j {
            return Ok(MatJet::identity(self.ext.e.dim()));
        }
        self.e_field(i, j)?.jet(p, v)
    }

    pub fn e_at(&self, i: usize, j: usize, p: &Vec3) -> Result<CMat> {
        if i == j {
            return Ok(eye(self.ext.e.dim()));
        }
        self.e_field(i, j)?.eval(p)
    }

    pub fn g_jet(&self, i: usize, j: usize, p: &Vec3, v: &Vec3) -> Result<MatJet> {
        if i == j {
            return Ok(MatJet::identity(self.ext.g.dim()));
        }
        self.g.get(&(i, j)).ok_or_else(|| Self::missing(&format!("g_{i}{j}")))?.jet(p, v)
    }

    pub fn g_at(&self, i: usize, j: usize, p: &Vec3) -> Result<CMat> {
        Ok(self.g_jet(i, j, p, &Vec3::zeros())?.val)
    }

    /// `h_ijk` as a scalar jet, with `h = 1` for repeated indices.
    pub fn h_jet(&self, i: usize, j: usize, k: usize, p: &Vec3, v: &Vec3) -> Result<MatJet> {
        if i == j || j == k || i == k {
            return Ok(MatJet::identity(1));
        }
        let (key, odd) = sort3(i, j, k);
        let f = self.h.get(&key).ok_or_else(|| Self::missing(&format!("h_{}{}{}", key.0, key.1, key.2)))?;
        let jt = f.jet(p, v)?;
        Ok(if odd { jt.inv_unitary() } else { jt })
    }

    pub fn h_at(&self, i: usize, j: usize, k: usize, p: &Vec3) -> Result<C64> {
        Ok(self.h_jet(i, j, k, p, &Vec3::zeros())?.val[(0, 0)])
    }

    pub fn a_ij_form(&self, i: usize, j: usize) -> Result<&LocalForm> {
        self.a_ij.get(&(i, j)).ok_or_else(|| Self::missing(&format!("A_{i}{j}")))
    }

    /// `A_ij(v)` in `L(H)`, zero for `i = j`.
    pub fn a_ij_at(&self, i: usize, j: usize, p: &Vec3, v: &Vec3) -> Result<C64> {
        if i == j {
            return Ok(c(0.0, 0.0));
        }
        Ok(self.a_ij_form(i, j)?.eval(p, &[*v])?[(0, 0)])
    }

    fn chart_form<'a>(v: &'a [Option<LocalForm>], i: usize, name: &str) -> Result<&'a LocalForm> {
        v.get(i).and_then(|x| x.as_ref()).ok_or_else(|| Self::missing(&format!("{name}_{i}")))
    }

    pub fn a_form(&self, i: usize) -> Result<&LocalForm> {
        Self::chart_form(&self.a, i, "A")
    }

    pub fn d_form(&self, i: usize) -> Result<&LocalForm> {
        Self::chart_form(&self.d, i, "D")
    }

    pub fn f_form(&self, i: usize) -> Result<&LocalForm> {
        Self::chart_form(&self.f, i, "F")
    }

    /// Fails with `MissingField` unless every overlap and chart carries data.
    pub fn check_complete(&self) -> Result<()> {
        for i in 0..self.cover.len() {
            self.a_form(i)?;
            self.d_form(i)?;
            self.f_form(i)?;
        }
        for &(i, j) in &self.cover.pairs {
            self.e_field(i, j)?;
            self.g_jet(i, j, &self.model.basepoint, &Vec3::zeros()).map(|_| ()).or_else(|e| match e {
                Error::MissingField(_) => Err(e),
                _ => Ok(()),
            })?;
            self.a_ij_form(i, j)?;
        }
        for &(i, j, k) in &self.cover.triples {
            if !self.h.contains_key(&(i, j, k)) {
                return Err(Self::missing(&format!("h_{i}{j}{k}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub max_residual: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<IdentityCheck>,
    pub tol: f64,
    pub pass: bool,
}

impl ValidationReport {
    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.max_residual).fold(0.0, f64::max)
    }
}

struct Acc {
    name: &'static str,
    max: f64,
    n: usize,
}

impl Acc {
    fn new(name: &'static str) -> Acc {
        Acc { name, max: 0.0, n: 0 }
    }
    fn push(&mut self, r: f64) {
        self.max = self.max.max(if r.is_nan() { f64::INFINITY } else { r });
        self.n += 1;
    }
}

/// Checks every cocycle and gluing identity at `samples` random points per
/// region (with random unit tangent vectors).
pub fn validate(b: &TwistedBundle, samples: usize, tol: f64, seed: u64) -> Result<ValidationReport> {
    b.check_complete()?;
    let ext = &b.ext;
    let model = &b.model;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ne = ext.e.dim();
    let ng = ext.g.dim();
    let mut memb = Acc::new("membership");
    let mut anti = Acc::new("antisymmetry");
    let mut proj = Acc::new("projection");
    let mut coc = Acc::new("cocycle");
    let mut hcoc = Acc::new("h cocycle");
    let mut conn = Acc::new("connection gluing");
    let mut base = Acc::new("base gluing");
    let mut dproj = Acc::new("base projection");
    let mut acoc = Acc::new("abelian cocycle");
    let mut curv = Acc::new("curving gluing");

    let sample = |idx: &[usize], rng: &mut ChaCha8Rng| -> Result<Vec3> {
        b.cover
            .sample_region(model, idx, rng)
            .ok_or_else(|| Error::PreconditionViolated(format!("no sample found in region {idx:?}")))
    };

    for i in 0..b.cover.len() {
        let a = b.a_form(i)?;
        let d = b.d_form(i)?;
        let f = b.f_form(i)?;
        for _ in 0..samples {
            let p = sample(&[i], &mut rng)?;
            let v = model.random_tangent(&p, &mut rng);
            let w = model.random_tangent(&p, &mut rng);
            let av = a.eval(&p, &[v])?;
            memb.push(ext.e.algebra_residual(&av));
            let dv = d.eval(&p, &[v])?;
            memb.push(ext.g.algebra_residual(&dv));
            dproj.push((dv - ext.project_algebra(&av)).norm());
            let fv = f.eval(&p, &[v, w])?;
            memb.push(ext.h.algebra_residual(&fv));
        }
    }

    for &(i, j) in &b.cover.pairs {
        let ai = b.a_form(i)?;
        let aj = b.a_form(j)?;
        let di = b.d_form(i)?;
        let dj = b.d_form(j)?;
        let dij = exterior_derivative(model, b.a_ij_form(i, j)?, b.fd_step)?;
        let fi = b.f_form(i)?;
        let fj = b.f_form(j)?;
        for _ in 0..samples {
            let p = sample(&[i, j], &mut rng)?;
            let v = model.random_tangent(&p, &mut rng);
            let w = model.random_tangent(&p, &mut rng);
            let e = b.e_jet(i, j, &p, &v)?;
            let eji = b.e_at(j, i, &p)?;
            let g = b.g_jet(i, j, &p, &v)?;
            let gji = b.g_at(j, i, &p)?;
            memb.push(ext.e.group_residual(&e.val));
            memb.push(ext.g.group_residual(&g.val));
            anti.push((&eji * &e.val - eye(ne)).norm());
            anti.push((&gji * &g.val - eye(ng)).norm());
            let aij = b.a_ij_at(i, j, &p, &v)?;
            anti.push((aij + b.a_ij_at(j, i, &p, &v)?).norm());
            proj.push((ext.project(&e.val) - &g.val).norm());
            // A_j - Ad(e⁻¹) A_i - e⁻¹de = ι(A_ij)
            let einv = e.val.adjoint();
            let lhs = aj.eval(&p, &[v])? - &einv * ai.eval(&p, &[v])? * &e.val - e.log_derivative();
            conn.push((lhs - ext.include_algebra(aij)).norm());
            let ginv = g.val.adjoint();
            let lhs = dj.eval(&p, &[v])? - &ginv * di.eval(&p, &[v])? * &g.val - g.log_derivative();
            base.push(lhs.norm());
            let lhs = fj.eval(&p, &[v, w])? - fi.eval(&p, &[v, w])? - dij.eval(&p, &[v, w])?;
            curv.push(lhs.norm());
        }
    }

    for &(i, j, k) in &b.cover.triples {
        for _ in 0..samples {
            let p = sample(&[i, j, k], &mut rng)?;
            let v = model.random_tangent(&p, &mut rng);
            let h = b.h_jet(i, j, k, &p, &v)?;
            memb.push(ext.h.group_residual(&h.val));
            let prod = b.e_at(i, j, &p)? * b.e_at(j, k, &p)? * b.e_at(k, i, &p)?;
            coc.push((prod - ext.include(h.val[(0, 0)])).norm());
            let sum = b.a_ij_at(i, j, &p, &v)? + b.a_ij_at(j, k, &p, &v)? + b.a_ij_at(k, i, &p, &v)?;
            acoc.push((sum + h.log_derivative()[(0, 0)]).norm());
        }
    }

    for q in &b.cover.quadruples {
        let [i, j, k, l] = *q;
        for _ in 0..samples {
            let p = sample(q, &mut rng)?;
            let x = b.h_at(j, k, l, &p)? * b.h_at(i, k, l, &p)?.conj() * b.h_at(i, j, l, &p)? * b.h_at(i, j, k, &p)?.conj();
            hcoc.push((x - c(1.0, 0.0)).norm());
        }
    }

    let checks: Vec<IdentityCheck> = [memb, anti, proj, coc, hcoc, conn, base, dproj, acoc, curv]
        .into_iter()
        .map(|a| IdentityCheck { name: a.name.into(), max_residual: a.max, samples: a.n })
        .collect();
    let pass = checks.iter().all(|c| c.max_residual <= tol);
    Ok(ValidationReport { checks, tol, pass })
}

/// Gauge data `(e_i, h_ij, B_i)`; `h` is given for `i < j`.
#[derive(Clone)]
pub struct GaugeData {
    pub e: Vec<Field>,
    pub h: BTreeMap<(usize, usize), Field>,
    pub b: Vec<LocalForm>,
}

impl GaugeData {
    fn h_jet(&self, i: usize, j: usize, p: &Vec3, v: &Vec3) -> Result<MatJet> {
        if i == j {
            return Ok(MatJet::identity(1));
        }
        let (key, flip) = if i < j { ((i, j), false) } else { ((j, i), true) };
        let f = self.h.get(&key).ok_or_else(|| Error::MissingField(format!("gauge h_{}{}", key.0, key.1)))?;
        let jt = f.jet(p, v)?;
        Ok(if flip { jt.inv_unitary() } else { jt })
    }
}

/// Applies a gauge transformation; every output field is an independent
/// closed-form expression in the input data.
pub fn gauge_transform(b: &TwistedBundle, gauge: &GaugeData) -> Result<TwistedBundle> {
    b.check_complete()?;
    let n = b.cover.len();
    let ext = b.ext.clone();
    let model = b.model.clone();
    let gz = Arc::new(gauge.clone());
    let src = Arc::new(b.clone());
    let mut out = TwistedBundle::new(&format!("{}-gauged", b.name), model.clone(), b.cover.clone(), ext.clone());
    out.fd_step = b.fd_step;
    let ne = ext.e.dim();
    let ng = ext.g.dim();

    let keys: Vec<(usize, usize)> = b.e.keys().copied().collect();
    for (i, j) in keys {
        let (s, g2, x) = (src.clone(), gz.clone(), ext.clone());
        let e_new = forms::closure_field(ne, move |p, v| {
            let ei = g2.e[i].jet(p, v)?.inv_unitary();
            let ej = g2.e[j].jet(p, v)?;
            let h = g2.h_jet(i, j, p, v)?;
            let ih = MatJet { val: x.include(h.val[(0, 0)]), der: x.include_algebra(h.der[(0, 0)]) };
            Ok(ei.mul(&s.e_jet(i, j, p, v)?).mul(&ej).mul(&ih))
        });
        let (s, g2, x) = (src.clone(), gz.clone(), ext.clone());
        let g_new = forms::closure_field(ng, move |p, v| {
            let gi = forms::project(x.clone(), g2.e[i].clone()).jet(p, v)?.inv_unitary();
            let gj = forms::project(x.clone(), g2.e[j].clone()).jet(p, v)?;
            Ok(gi.mul(&s.g_jet(i, j, p, v)?).mul(&gj))
        });
        out.e.insert((i, j), e_new);
        out.g.insert((i, j), g_new);

        let (s, g2) = (src.clone(), gz.clone());
        let a_new = LocalForm::callable(&model, 1, 1, Tag::H, move |p, vs| {
            let v = vs[0];
            let h = g2.h_jet(i, j, p, &v)?;
            let val = s.a_ij_at(i, j, p, &v)? + g2.b[j].eval(p, vs)?[(0, 0)] - g2.b[i].eval(p, vs)?[(0, 0)]
                - h.log_derivative()[(0, 0)];
            Ok(CMat::from_element(1, 1, val))
        });
        out.a_ij.insert((i, j), a_new);
    }

    let tkeys: Vec<(usize, usize, usize)> = b.h.keys().copied().collect();
    for (i, j, k) in tkeys {
        let (s, g2) = (src.clone(), gz.clone());
        out.h.insert(
            (i, j, k),
            forms::closure_field(1, move |p, v| {
                Ok(s.h_jet(i, j, k, p, v)?.mul(&g2.h_jet(i, j, p, v)?).mul(&g2.h_jet(j, k, p, v)?).mul(&g2.h_jet(k, i, p, v)?))
            }),
        );
    }

    for i in 0..n {
        let (s, g2, x) = (src.clone(), gz.clone(), ext.clone());
        let a = LocalForm::callable(&model, 1, ne, Tag::E, move |p, vs| {
            let e = g2.e[i].jet(p, &vs[0])?;
            let ei = e.val.adjoint();
            let b_v = g2.b[i].eval(p, vs)?[(0, 0)];
            Ok(&ei * s.a_form(i)?.eval(p, vs)? * &e.val + x.include_algebra(b_v) + e.log_derivative())
        });
        let (s, g2, x) = (src.clone(), gz.clone(), ext.clone());
        let d = LocalForm::callable(&model, 1, ng, Tag::G, move |p, vs| {
            let g = forms::project(x.clone(), g2.e[i].clone()).jet(p, &vs[0])?;
            let gi = g.val.adjoint();
            Ok(&gi * s.d_form(i)?.eval(p, vs)? * &g.val + g.log_derivative())
        });
        let db = exterior_derivative(&model, &gauge.b[i], b.fd_step)?;
        let f = b.f_form(i)?.add(&db);
        out.set_chart(i, d, a, f);
    }
    Ok(out)
}

/// Random smooth gauge: products of exponentials of coordinate-linear
/// multiples of random algebra elements, phase functions and linear `B_i`.
pub fn random_gauge(b: &TwistedBundle, seed: u64, amplitude: f64) -> Result<GaugeData> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ext = &b.ext;
    let names = b.model.coordinate_names();
    let na = names.len();
    let mut es = Vec::new();
    for i in 0..b.cover.len() {
        let chart = b.cover.charts[i].clone();
        let mut factors = Vec::new();
        for _ in 0..2 {
            let x = ext.e.random_algebra(&mut rng, amplitude);
            let c0: f64 = rng.gen_range(-1.0..1.0);
            let lin: Vec<f64> = (0..na).map(|_| rng.gen_range(-1.0..1.0)).collect();
            factors.push(forms::jet_field(ext.e.dim(), Some(chart.clone()), move |q| {
                let mut f = crate::dual::CDual::real(c0, 0.0);
                for (k, a) in lin.iter().enumerate() {
                    f = f + q[k] * crate::dual::CDual::real(*a, 0.0);
                }
                Ok(MatJet::exp_of(&x, f))
            }));
        }
        es.push(forms::product(factors));
    }
    let mut hs = BTreeMap::new();
    for &(i, j) in &b.cover.pairs {
        let chart = b.cover.charts[i].clone();
        let c0: f64 = rng.gen_range(-3.0..3.0);
        let lin: Vec<f64> = (0..na).map(|_| amplitude * rng.gen_range(-1.0..1.0)).collect();
        hs.insert(
            (i, j),
            forms::jet_field(1, Some(chart), move |q| {
                let mut f = crate::dual::CDual::real(c0, 0.0);
                for (k, a) in lin.iter().enumerate() {
                    f = f + q[k] * crate::dual::CDual::real(*a, 0.0);
                }
                Ok(MatJet::scalar((f * crate::dual::CDual::constant(c(0.0, 1.0))).exp()))
            }),
        );
    }
    let mut bs = Vec::new();
    for i in 0..b.cover.len() {
        let chart = b.cover.charts[i].clone();
        let srcs: Vec<String> = (0..na)
            .map(|k| {
                let a: f64 = amplitude * rng.gen_range(-1.0..1.0);
                let m: f64 = amplitude * rng.gen_range(-1.0..1.0);
                format!("i*(({a:?}) + ({m:?})*{})", names[(k + 1) % na])
            })
            .collect();
        let refs: Vec<&str> = srcs.iter().map(|s| s.as_str()).collect();
        bs.push(LocalForm::parse_scalar(&b.model, 1, Tag::H, &refs, Some(chart))?);
    }
    Ok(GaugeData { e: es, h: hs, b: bs })
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvatureReport {
    /// Largest variation of `h_ijk` over sampled points of each triple overlap.
    pub h_variation: Vec<((usize, usize, usize), f64)>,
    /// Largest sampled `|dF_i(∂_u, ∂_v, ∂_w)|`; zero on surfaces.
    pub curvature: f64,
    pub flat_bundle: bool,
    pub flat_connection: bool,
}

pub fn is_flat(b: &TwistedBundle, samples: usize, tol: f64, seed: u64) -> Result<CurvatureReport> {
    b.check_complete()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = &b.model;
    let mut h_variation = Vec::new();
    for &(i, j, k) in &b.cover.triples {
        let mut first: Option<C64> = None;
        let mut var: f64 = 0.0;
        for _ in 0..samples {
            if let Some(p) = b.cover.sample_region(model, &[i, j, k], &mut rng) {
                let h = b.h_at(i, j, k, &p)?;
                match first {
                    None => first = Some(h),
                    Some(h0) => var = var.max((h - h0).norm()),
                }
            }
        }
        h_variation.push(((i, j, k), var));
    }
    let mut curvature: f64 = 0.0;
    if model.dim() >= 3 {
        for i in 0..b.cover.len() {
            let df = exterior_derivative(model, b.f_form(i)?, b.fd_step)?;
            for _ in 0..samples {
                let p = b.cover.sample_region(model, &[i], &mut rng).ok_or(Error::PreconditionViolated("empty chart".into()))?;
                let vs = [Vec3::x(), Vec3::y(), Vec3::z()];
                curvature = curvature.max(df.eval(&p, &vs)?.norm());
            }
        }
    }
    let flat_bundle = h_variation.iter().all(|(_, v)| *v <= tol);
    Ok(CurvatureReport { h_variation, curvature, flat_bundle, flat_connection: curvature <= tol })
}
