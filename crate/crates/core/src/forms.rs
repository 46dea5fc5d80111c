//! Matrix-valued functions and differential forms on charts, exterior
//! derivative, and Gauss–Legendre integration over parametrised cells.

use crate::dual::CDual;
use crate::error::{Error, Result};
use crate::expm::expm;
use crate::expr::{self, Expr};
use crate::geometry::{Chart, ManifoldModel, ModelKind, Vec3};
use crate::lie::{c, eye, CMat, CentralExtension, Tag};
use std::sync::{Arc, OnceLock};

/// A matrix value together with its derivative along one direction.
#[derive(Clone, Debug, PartialEq)]
pub struct MatJet {
    pub val: CMat,
    pub der: CMat,
}

impl MatJet {
    pub fn constant(val: CMat) -> MatJet {
        let n = (val.nrows(), val.ncols());
        MatJet { val, der: CMat::zeros(n.0, n.1) }
    }

    pub fn identity(n: usize) -> MatJet {
        MatJet::constant(eye(n))
    }

    /// Builds an `n × n` jet from row-major dual entries.
    pub fn from_duals(n: usize, entries: &[CDual]) -> MatJet {
        MatJet {
            val: CMat::from_fn(n, n, |i, j| entries[i * n + j].v),
            der: CMat::from_fn(n, n, |i, j| entries[i * n + j].d),
        }
    }

    pub fn scalar(z: CDual) -> MatJet {
        MatJet::from_duals(1, &[z])
    }

    pub fn mul(&self, o: &MatJet) -> MatJet {
        MatJet { val: &self.val * &o.val, der: &self.der * &o.val + &self.val * &o.der }
    }

    /// Inverse of a unitary-valued jet.
    pub fn inv_unitary(&self) -> MatJet {
        let vi = self.val.adjoint();
        MatJet { der: -(&vi * &self.der * &vi), val: vi }
    }

    pub fn scale(&self, z: CDual) -> MatJet {
        MatJet { val: self.val.map(|x| x * z.v), der: self.der.map(|x| x * z.v) + self.val.map(|x| x * z.d) }
    }

    /// `exp(f·X)` for a constant matrix `X` and scalar jet `f`.
    pub fn exp_of(x: &CMat, f: CDual) -> MatJet {
        let val = expm(&x.map(|z| z * f.v));
        let der = x.map(|z| z * f.d) * &val;
        MatJet { val, der }
    }

    /// `val⁻¹ · der` for unitary values: the pulled-back Maurer–Cartan form.
    pub fn log_derivative(&self) -> CMat {
        self.val.adjoint() * &self.der
    }
}

/// Dual coordinates of `p` seeded with direction `v`.
pub fn dual_coords(p: &Vec3, v: &Vec3) -> [CDual; 3] {
    [CDual::real(p.x, v.x), CDual::real(p.y, v.y), CDual::real(p.z, v.z)]
}

/// A smooth matrix-valued function on (part of) a model.
pub trait MatrixField: Send + Sync {
    fn dim(&self) -> usize;

    /// Value and derivative along `v` at `p`.
    fn jet(&self, p: &Vec3, v: &Vec3) -> Result<MatJet>;

    fn eval(&self, p: &Vec3) -> Result<CMat> {
        Ok(self.jet(p, &Vec3::zeros())?.val)
    }

    fn as_expr(&self) -> Option<&ExprField> {
        None
    }
}

pub type Field = Arc<dyn MatrixField>;

/// Constant matrix.
pub struct ConstField(pub CMat);

impl MatrixField for ConstField {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn jet(&self, _p: &Vec3, _v: &Vec3) -> Result<MatJet> {
        Ok(MatJet::constant(self.0.clone()))
    }
}

pub fn constant(m: CMat) -> Field {
    Arc::new(ConstField(m))
}

/// Row-major matrix of expressions in chart-local coordinates.
pub struct ExprField {
    pub n: usize,
    pub comps: Vec<Expr>,
    pub chart: Option<Chart>,
}

impl ExprField {
    pub fn parse(n: usize, srcs: &[&str], names: &[&str], chart: Option<Chart>) -> Result<ExprField> {
        if srcs.len() != n * n {
            return Err(Error::Shape(format!("{} entries for a {n}×{n} matrix", srcs.len())));
        }
        let comps = srcs.iter().map(|s| expr::parse(s, names)).collect::<Result<Vec<_>>>()?;
        Ok(ExprField { n, comps, chart })
    }

    fn local(&self, p: &Vec3) -> Vec3 {
        self.chart.as_ref().map_or(*p, |ch| ch.localize(p))
    }
}

impl MatrixField for ExprField {
    fn dim(&self) -> usize {
        self.n
    }
    fn jet(&self, p: &Vec3, v: &Vec3) -> Result<MatJet> {
        let q = self.local(p);
        let pt = [q.x, q.y, q.z];
        let sd = [v.x, v.y, v.z];
        let ds = self.comps.iter().map(|e| e.eval_dual(&pt, &sd)).collect::<Result<Vec<_>>>()?;
        Ok(MatJet::from_duals(self.n, &ds))
    }
    fn as_expr(&self) -> Option<&ExprField> {
        Some(self)
    }
}

type JetFn = dyn Fn(&[CDual; 3]) -> Result<MatJet> + Send + Sync;

/// Native field written against dual coordinates (exact derivatives).
pub struct JetField {
    pub n: usize,
    pub chart: Option<Chart>,
    pub f: Arc<JetFn>,
}

impl MatrixField for JetField {
    fn dim(&self) -> usize {
        self.n
    }
    fn jet(&self, p: &Vec3, v: &Vec3) -> Result<MatJet> {
        let q = self.chart.as_ref().map_or(*p, |ch| ch.localize(p));
        (self.f)(&dual_coords(&q, v))
    }
}

pub fn jet_field(
    n: usize,
    chart: Option<Chart>,
    f: impl Fn(&[CDual; 3]) -> Result<MatJet> + Send + Sync + 'static,
) -> Field {
    Arc::new(JetField { n, chart, f: Arc::new(f) })
}

type PointFn = dyn Fn(&Vec3) -> Result<CMat> + Send + Sync;

/// Field known only pointwise; derivatives by central differences along the
/// model's retraction curves.
pub struct FdField {
    pub n: usize,
    pub model: ManifoldModel,
    pub step: f64,
    pub f: Arc<PointFn>,
}

impl MatrixField for FdField {
    fn dim(&self) -> usize {
        self.n
    }
    fn jet(&self, p: &Vec3, v: &Vec3) -> Result<MatJet> {
        let val = (self.f)(p)?;
        if v.norm() == 0.0 {
            return Ok(MatJet::constant(val));
        }
        let h = self.step;
        let a = (self.f)(&self.model.retraction_curve(p, v, h))?;
        let b = (self.f)(&self.model.retraction_curve(p, v, -h))?;
        Ok(MatJet { val, der: (a - b) / c(2.0 * h, 0.0) })
    }
    fn eval(&self, p: &Vec3) -> Result<CMat> {
        (self.f)(p)
    }
}

type ClosureFn = dyn Fn(&Vec3, &Vec3) -> Result<MatJet> + Send + Sync;

/// Field defined by combining other fields.
pub struct ClosureField {
    pub n: usize,
    pub f: Arc<ClosureFn>,
}

impl MatrixField for ClosureField {
    fn dim(&self) -> usize {
        self.n
    }
    fn jet(&self, p: &Vec3, v: &Vec3) -> Result<MatJet> {
        (self.f)(p, v)
    }
}

pub fn closure_field(n: usize, f: impl Fn(&Vec3, &Vec3) -> Result<MatJet> + Send + Sync + 'static) -> Field {
    Arc::new(ClosureField { n, f: Arc::new(f) })
}

pub fn product(fields: Vec<Field>) -> Field {
    let n = fields[0].dim();
    closure_field(n, move |p, v| {
        let mut acc = fields[0].jet(p, v)?;
        for f in &fields[1..] {
            acc = acc.mul(&f.jet(p, v)?);
        }
        Ok(acc)
    })
}

pub fn inverse(f: Field) -> Field {
    closure_field(f.dim(), move |p, v| Ok(f.jet(p, v)?.inv_unitary()))
}

/// `π ∘ f` for an `E`-valued field.
pub fn project(ext: Arc<CentralExtension>, f: Field) -> Field {
    let n = ext.g.dim();
    closure_field(n, move |p, v| {
        let j = f.jet(p, v)?;
        let val = ext.project(&j.val);
        let der = &val * ext.project_algebra(&j.log_derivative());
        Ok(MatJet { val, der })
    })
}

/// `ι ∘ h` for an `H`-valued (1×1) field.
pub fn include(ext: Arc<CentralExtension>, h: Field) -> Field {
    let n = ext.e.dim();
    closure_field(n, move |p, v| {
        let j = h.jet(p, v)?;
        Ok(MatJet { val: ext.include(j.val[(0, 0)]), der: ext.include_algebra(j.der[(0, 0)]) })
    })
}

// ---------------------------------------------------------------------------
// Forms.

type FormFn = dyn Fn(&Vec3, &[Vec3]) -> Result<CMat> + Send + Sync;

#[derive(Clone)]
pub enum FormRepr {
    /// One field per increasing index set of ambient coordinates, in
    /// lexicographic order.
    Components(Vec<Field>),
    /// Direct evaluation on tangent vectors.
    Callable(Arc<FormFn>),
}

/// A matrix-valued differential form on one chart.
#[derive(Clone)]
pub struct LocalForm {
    pub degree: usize,
    /// Number of ambient coordinates.
    pub ambient: usize,
    /// Matrix size of the values.
    pub n: usize,
    pub tag: Tag,
    pub repr: FormRepr,
}

impl std::fmt::Debug for LocalForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "LocalForm {{ degree: {}, n: {}, tag: {:?} }}", self.degree, self.n, self.tag)
    }
}

/// Increasing `k`-subsets of `0..n` in lexicographic order.
pub fn index_sets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn minor(vs: &[Vec3], idx: &[usize]) -> f64 {
    match idx.len() {
        0 => 1.0,
        1 => vs[0][idx[0]],
        2 => vs[0][idx[0]] * vs[1][idx[1]] - vs[0][idx[1]] * vs[1][idx[0]],
        3 => {
            let m = nalgebra::Matrix3::from_fn(|a, b| vs[a][idx[b]]);
            m.determinant()
        }
        _ => unreachable!("forms of degree above 3"),
    }
}

impl LocalForm {
    pub fn from_components(model: &ManifoldModel, degree: usize, tag: Tag, comps: Vec<Field>) -> Result<LocalForm> {
        let ambient = model.ambient_dim();
        if degree > model.dim() {
            return Err(Error::Shape(format!("degree {degree} exceeds dimension {}", model.dim())));
        }
        let want = index_sets(ambient, degree).len();
        if comps.len() != want {
            return Err(Error::Shape(format!("{} components for a {degree}-form, expected {want}", comps.len())));
        }
        let n = comps[0].dim();
        Ok(LocalForm { degree, ambient, n, tag, repr: FormRepr::Components(comps) })
    }

    pub fn callable(
        model: &ManifoldModel,
        degree: usize,
        n: usize,
        tag: Tag,
        f: impl Fn(&Vec3, &[Vec3]) -> Result<CMat> + Send + Sync + 'static,
    ) -> LocalForm {
        LocalForm { degree, ambient: model.ambient_dim(), n, tag, repr: FormRepr::Callable(Arc::new(f)) }
    }

    pub fn zero(model: &ManifoldModel, degree: usize, n: usize, tag: Tag) -> LocalForm {
        LocalForm::callable(model, degree, n, tag, move |_, _| Ok(CMat::zeros(n, n)))
    }

    /// Parses a form from component expressions (scalar `1×1` values).
    pub fn parse_scalar(model: &ManifoldModel, degree: usize, tag: Tag, srcs: &[&str], chart: Option<Chart>) -> Result<LocalForm> {
        let names = model.coordinate_names();
        let comps = srcs
            .iter()
            .map(|s| Ok(Arc::new(ExprField::parse(1, &[s], names, chart.clone())?) as Field))
            .collect::<Result<Vec<_>>>()?;
        LocalForm::from_components(model, degree, tag, comps)
    }

    /// Evaluates on `degree` tangent vectors at `p`.
    pub fn eval(&self, p: &Vec3, vs: &[Vec3]) -> Result<CMat> {
        if vs.len() != self.degree {
            return Err(Error::Shape(format!("{} vectors for a {}-form", vs.len(), self.degree)));
        }
        match &self.repr {
            FormRepr::Callable(f) => f(p, vs),
            FormRepr::Components(cs) => {
                let sets = index_sets(self.ambient, self.degree);
                let mut acc = CMat::zeros(self.n, self.n);
                for (f, idx) in cs.iter().zip(&sets) {
                    let m = minor(vs, idx);
                    if m != 0.0 {
                        acc += f.eval(p)? * c(m, 0.0);
                    }
                }
                Ok(acc)
            }
        }
    }

    pub fn add(&self, o: &LocalForm) -> LocalForm {
        let (a, b) = (self.clone(), o.clone());
        LocalForm {
            degree: self.degree,
            ambient: self.ambient,
            n: self.n,
            tag: self.tag,
            repr: FormRepr::Callable(Arc::new(move |p, vs| Ok(a.eval(p, vs)? + b.eval(p, vs)?))),
        }
    }
}

/// Point of the coordinate patch `a ↦ retract(p + Σ aᵢ vᵢ)` and its partials.
fn patch(model: &ManifoldModel, p: &Vec3, vs: &[Vec3], a: &[f64]) -> (Vec3, Vec<Vec3>) {
    let mut q = *p;
    for (v, x) in vs.iter().zip(a) {
        q += v * *x;
    }
    match model.kind {
        ModelKind::Sphere => {
            let r = q.norm();
            let phi = q / r;
            let parts = vs.iter().map(|v| (v - phi * phi.dot(v)) / r).collect();
            (phi, parts)
        }
        _ => (model.retract(&q), vs.to_vec()),
    }
}

/// Exterior derivative. Expression components are differentiated
/// symbolically, other components through their jets, and callable forms by
/// central differences (step `fd_step`) in a commuting coordinate patch.
pub fn exterior_derivative(model: &ManifoldModel, form: &LocalForm, fd_step: f64) -> Result<LocalForm> {
    let k = form.degree;
    if k >= model.dim() {
        return Err(Error::Shape(format!("d of a top-degree form on a {}-dimensional model", model.dim())));
    }
    let amb = form.ambient;
    let tag = form.tag;
    let n = form.n;
    if let FormRepr::Components(cs) = &form.repr {
        let exprs: Option<Vec<&ExprField>> = cs.iter().map(|f| f.as_expr()).collect();
        let lower = index_sets(amb, k);
        let upper = index_sets(amb, k + 1);
        if let Some(es) = exprs {
            let chart = es[0].chart.clone();
            let mut comps: Vec<Field> = Vec::new();
            for j in &upper {
                let mut entries = Vec::with_capacity(n * n);
                for e in 0..n * n {
                    let mut acc = Expr::Num(0.0);
                    for (m, &jm) in j.iter().enumerate() {
                        let rest: Vec<usize> = j.iter().copied().filter(|&x| x != jm).collect();
                        let pos = lower.iter().position(|s| *s == rest).unwrap();
                        let d = es[pos].comps[e].diff(jm);
                        acc = if m % 2 == 0 { expr::add(acc, d) } else { expr::sub(acc, d) };
                    }
                    entries.push(acc);
                }
                comps.push(Arc::new(ExprField { n, comps: entries, chart: chart.clone() }));
            }
            return Ok(LocalForm { degree: k + 1, ambient: amb, n, tag, repr: FormRepr::Components(comps) });
        }
        let cs = cs.clone();
        return Ok(LocalForm::callable(model, k + 1, n, tag, move |p, vs| {
            let mut acc = CMat::zeros(n, n);
            for i in 0..=k {
                let rest: Vec<Vec3> = vs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
                for (f, idx) in cs.iter().zip(&lower) {
                    let m = minor(&rest, idx);
                    if m != 0.0 {
                        let d = f.jet(p, &vs[i])?.der * c(m, 0.0);
                        if i % 2 == 0 {
                            acc += d;
                        } else {
                            acc -= d;
                        }
                    }
                }
            }
            Ok(acc)
        }));
    }
    let f = form.clone();
    let model2 = model.clone();
    Ok(LocalForm::callable(model, k + 1, n, tag, move |p, vs| {
        let mut acc = CMat::zeros(n, n);
        for i in 0..=k {
            let mut diff = CMat::zeros(n, n);
            for sgn in [1.0, -1.0] {
                let mut a = vec![0.0; k + 1];
                a[i] = sgn * fd_step;
                let (q, parts) = patch(&model2, p, vs, &a);
                let rest: Vec<Vec3> = parts.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
                diff += f.eval(&q, &rest)? * c(sgn, 0.0);
            }
            diff /= c(2.0 * fd_step, 0.0);
            if i % 2 == 0 {
                acc += diff;
            } else {
                acc -= diff;
            }
        }
        Ok(acc)
    }))
}

// ---------------------------------------------------------------------------
// Quadrature.

fn gauss_table() -> &'static Vec<Vec<(f64, f64)>> {
    static TABLE: OnceLock<Vec<Vec<(f64, f64)>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=32).map(gauss_legendre_nodes).collect())
}

fn gauss_legendre_nodes(n: usize) -> Vec<(f64, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// Nodes and weights on `[a, b]`.
pub fn gauss_legendre(order: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let tab = gauss_table();
    let base = if order <= 32 { tab[order].clone() } else { gauss_legendre_nodes(order) };
    base.into_iter().map(|(x, w)| (mid + half * x, w * half)).collect()
}

/// `∫_a^b ω(γ'(t)) dt` for a curve given as point and velocity.
pub fn integrate_1form(
    form: &LocalForm,
    curve: impl Fn(f64) -> (Vec3, Vec3),
    a: f64,
    b: f64,
    order: usize,
) -> Result<CMat> {
    let mut acc = CMat::zeros(form.n, form.n);
    for (t, w) in gauss_legendre(order, a, b) {
        let (p, v) = curve(t);
        acc += form.eval(&p, &[v])? * c(w, 0.0);
    }
    Ok(acc)
}

/// `∫∫ ω(∂_x σ, ∂_y σ) dx dy` over `[x0, x1] × [y0, y1]`, the patch returning
/// point and both partials.
pub fn integrate_2form(
    form: &LocalForm,
    patch: impl Fn(f64, f64) -> (Vec3, Vec3, Vec3),
    x: (f64, f64),
    y: (f64, f64),
    order: usize,
) -> Result<CMat> {
    let mut acc = CMat::zeros(form.n, form.n);
    let gy = gauss_legendre(order, y.0, y.1);
    for (xa, wa) in gauss_legendre(order, x.0, x.1) {
        for &(yb, wb) in &gy {
            let (p, dx, dy) = patch(xa, yb);
            acc += form.eval(&p, &[dx, dy])? * c(wa * wb, 0.0);
        }
    }
    Ok(acc)
}

/// Checks that every quadrature node of a segment lies in `chart`.
pub fn check_in_chart(chart: &Chart, idx: usize, pts: impl Iterator<Item = Vec3>) -> Result<()> {
    for p in pts {
        if !chart.contains(&p, 0.0) {
            return Err(Error::ChartMismatch { chart: idx });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Cover;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sphere() -> ManifoldModel {
        ManifoldModel::new(ModelKind::Sphere)
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for order in 1..=12 {
            for deg in 0..2 * order {
                let s: f64 = gauss_legendre(order, 0.0, 2.0).iter().map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
                assert!((s - exact).abs() < 1e-12 * exact.max(1.0), "order {order} deg {deg}");
            }
        }
    }

    #[test]
    fn area_form_integrates_to_four_pi() {
        let m = sphere();
        let sigma = LocalForm::parse_scalar(&m, 2, Tag::H, &["z", "-y", "x"], None).unwrap();
        // Spherical coordinates (θ, φ): σ(∂θ, ∂φ) = sin θ.
        let patch = |th: f64, ph: f64| {
            let p = Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
            let dth = Vec3::new(th.cos() * ph.cos(), th.cos() * ph.sin(), -th.sin());
            let dph = Vec3::new(-th.sin() * ph.sin(), th.sin() * ph.cos(), 0.0);
            (p, dth, dph)
        };
        let mut total = c(0.0, 0.0);
        let n = 8;
        for a in 0..n {
            for b in 0..n {
                let x = (PI * a as f64 / n as f64, PI * (a + 1) as f64 / n as f64);
                let y = (2.0 * PI * b as f64 / n as f64, 2.0 * PI * (b + 1) as f64 / n as f64);
                total += integrate_2form(&sigma, patch, x, y, 8).unwrap()[(0, 0)];
            }
        }
        assert!((total.re - 4.0 * PI).abs() < 1e-6, "{total}");
        // Independent midpoint Riemann sum of sin θ.
        let m_pts = 2000;
        let h = PI / m_pts as f64;
        let riemann: f64 = (0..m_pts).map(|k| ((k as f64 + 0.5) * h).sin() * h).sum::<f64>() * 2.0 * PI;
        assert!((total.re - riemann).abs() < 1e-5);
    }

    #[test]
    fn d_squared_vanishes_for_expression_forms_on_the_cube() {
        let m = ManifoldModel::new(ModelKind::Cube);
        let f = LocalForm::parse_scalar(&m, 1, Tag::H, &["i*u*v^2", "sin(w)*u", "exp(v*u)"], None).unwrap();
        let df = exterior_derivative(&m, &f, 1e-5).unwrap();
        let ddf = exterior_derivative(&m, &df, 1e-5);
        // ddf is a 3-form on a 3-manifold: allowed to build, evaluates to zero.
        let ddf = ddf.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = m.random_point(&mut rng);
            let vs: Vec<Vec3> = (0..3).map(|_| m.random_tangent(&p, &mut rng)).collect();
            assert!(ddf.eval(&p, &vs).unwrap().norm() < 1e-10);
        }
    }

    #[test]
    fn d_of_top_degree_is_rejected_on_surfaces() {
        let m = sphere();
        let sigma = LocalForm::parse_scalar(&m, 2, Tag::H, &["z", "-y", "x"], None).unwrap();
        assert!(exterior_derivative(&m, &sigma, 1e-5).is_err());
    }

    #[test]
    fn callable_derivative_matches_symbolic_on_the_sphere() {
        let m = sphere();
        let a = LocalForm::parse_scalar(&m, 1, Tag::H, &["i*y*z", "-i*x", "i*x*y^2"], None).unwrap();
        let sym = exterior_derivative(&m, &a, 1e-5).unwrap();
        let a2 = a.clone();
        let opaque = LocalForm::callable(&m, 1, 1, Tag::H, move |p, vs| a2.eval(p, vs));
        let fd = exterior_derivative(&m, &opaque, 1e-5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = m.random_point(&mut rng);
            let v = m.random_tangent(&p, &mut rng);
            let w = m.random_tangent(&p, &mut rng);
            let x = sym.eval(&p, &[v, w]).unwrap();
            let y = fd.eval(&p, &[v, w]).unwrap();
            assert!((&x - &y).norm() < 1e-7, "{x} {y}");
        }
    }

    #[test]
    fn jet_components_match_symbolic_derivative() {
        let m = sphere();
        let e = LocalForm::parse_scalar(&m, 1, Tag::H, &["i*y*z", "-i*x", "i*x*y^2"], None).unwrap();
        let comps: Vec<Field> = ["i*y*z", "-i*x", "i*x*y^2"]
            .iter()
            .map(|s| {
                let ex = expr::parse(s, &["x", "y", "z"]).unwrap();
                jet_field(1, None, move |cd| {
                    let pt = [cd[0].v.re, cd[1].v.re, cd[2].v.re];
                    let sd = [cd[0].d.re, cd[1].d.re, cd[2].d.re];
                    Ok(MatJet::scalar(ex.eval_dual(&pt, &sd)?))
                })
            })
            .collect();
        let j = LocalForm::from_components(&m, 1, Tag::H, comps).unwrap();
        let (d1, d2) = (exterior_derivative(&m, &e, 1e-5).unwrap(), exterior_derivative(&m, &j, 1e-5).unwrap());
        let p = Vec3::new(0.6, 0.0, 0.8);
        let (v, w) = (Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.8, 0.0, -0.6));
        assert!((d1.eval(&p, &[v, w]).unwrap() - d2.eval(&p, &[v, w]).unwrap()).norm() < 1e-13);
    }

    #[test]
    fn torus_fields_use_chart_local_lifts() {
        let m = ManifoldModel::new(ModelKind::Torus);
        let cover = Cover::torus_grid(&m, 3, 0.04);
        let ch = cover.charts[0].clone();
        let f = ExprField::parse(1, &["u"], &["u", "v"], Some(ch)).unwrap();
        let a = f.eval(&Vec3::new(0.1, 0.1, 0.0)).unwrap()[(0, 0)].re;
        let b = f.eval(&Vec3::new(1.1, 0.1, 0.0)).unwrap()[(0, 0)].re;
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn parse_rejects_bad_component_counts() {
        let m = sphere();
        assert!(LocalForm::parse_scalar(&m, 1, Tag::H, &["x", "y"], None).is_err());
    }
}
