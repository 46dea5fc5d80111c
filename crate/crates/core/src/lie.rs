//! Matrix Lie groups, their algebras and central extensions `H → E → G`,
//! plus the path-ordered exponential used by every holonomy computation.

use crate::error::{Error, Result};
use crate::expm::{expm, log_unit};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Which group of the extension a value belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    H,
    E,
    G,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub grp: f64,
    pub alg: f64,
    pub fiber: f64,
    pub cech: f64,
    pub inv: f64,
    pub rec: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { grp: 1e-9, alg: 1e-9, fiber: 1e-7, cech: 1e-8, inv: 1e-6, rec: 1e-4 }
    }
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn scalar(z: C64) -> CMat {
    CMat::from_element(1, 1, z)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Pauli matrices.
pub fn pauli(k: usize) -> CMat {
    let (a, b, cc, d) = match k {
        0 => (c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)),
        1 => (c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)),
        _ => (c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)),
    };
    CMat::from_row_slice(2, 2, &[a, b, cc, d])
}

/// Compact matrix groups supported as `H`, `E` or `G`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GroupFamily {
    /// The trivial group, as 1×1 identity.
    Trivial,
    Unitary(usize),
    SpecialUnitary(usize),
    /// Diagonal unitary matrices, `U(1)^k`.
    Torus(usize),
    /// `SO(3)`, realised as the adjoint image of `U(2)`.
    Rotation3,
    /// Block-diagonal direct product.
    Product(Vec<GroupFamily>),
}

impl GroupFamily {
    pub fn dim(&self) -> usize {
        match self {
            GroupFamily::Trivial => 1,
            GroupFamily::Unitary(n) | GroupFamily::SpecialUnitary(n) | GroupFamily::Torus(n) => *n,
            GroupFamily::Rotation3 => 3,
            GroupFamily::Product(fs) => fs.iter().map(|f| f.dim()).sum(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            GroupFamily::Trivial => "1".into(),
            GroupFamily::Unitary(n) => format!("U({n})"),
            GroupFamily::SpecialUnitary(n) => format!("SU({n})"),
            GroupFamily::Torus(n) => format!("U(1)^{n}"),
            GroupFamily::Rotation3 => "SO(3)".into(),
            GroupFamily::Product(fs) => fs.iter().map(|f| f.name()).collect::<Vec<_>>().join("×"),
        }
    }

    fn off_diagonal(m: &CMat) -> f64 {
        let mut s = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if i != j {
                    s += m[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    }

    fn imaginary(m: &CMat) -> f64 {
        m.iter().map(|z| z.im * z.im).sum::<f64>().sqrt()
    }

    fn blocks(&self) -> Vec<(usize, &GroupFamily)> {
        let mut out = Vec::new();
        if let GroupFamily::Product(fs) = self {
            let mut off = 0;
            for f in fs {
                out.push((off, f));
                off += f.dim();
            }
        }
        out
    }

    fn off_block(&self, m: &CMat) -> f64 {
        let mut owner = vec![0usize; self.dim()];
        for (b, (off, f)) in self.blocks().into_iter().enumerate() {
            for k in 0..f.dim() {
                owner[off + k] = b;
            }
        }
        let mut s = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if owner[i] != owner[j] {
                    s += m[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    }

    /// Distance-like residual of `m` from the group (0 for members).
    pub fn group_residual(&self, m: &CMat) -> f64 {
        if m.nrows() != self.dim() || m.ncols() != self.dim() {
            return f64::INFINITY;
        }
        let n = self.dim();
        let unitarity = (m.adjoint() * m - eye(n)).norm();
        match self {
            GroupFamily::Trivial => (m - eye(1)).norm(),
            GroupFamily::Unitary(_) => unitarity,
            GroupFamily::SpecialUnitary(_) => unitarity + (m.determinant() - c(1., 0.)).norm(),
            GroupFamily::Torus(_) => unitarity + Self::off_diagonal(m),
            GroupFamily::Rotation3 => {
                unitarity + Self::imaginary(m) + (m.determinant() - c(1., 0.)).norm()
            }
            GroupFamily::Product(_) => {
                let mut r = self.off_block(m);
                for (off, f) in self.blocks() {
                    let d = f.dim();
                    r += f.group_residual(&m.view((off, off), (d, d)).into_owned());
                }
                r
            }
        }
    }

    /// Distance-like residual of `x` from the Lie algebra.
    pub fn algebra_residual(&self, x: &CMat) -> f64 {
        if x.nrows() != self.dim() || x.ncols() != self.dim() {
            return f64::INFINITY;
        }
        let skew = (x + x.adjoint()).norm();
        match self {
            GroupFamily::Trivial => x.norm(),
            GroupFamily::Unitary(_) => skew,
            GroupFamily::SpecialUnitary(_) => skew + x.trace().norm(),
            GroupFamily::Torus(_) => skew + Self::off_diagonal(x),
            GroupFamily::Rotation3 => skew + Self::imaginary(x),
            GroupFamily::Product(_) => {
                let mut r = self.off_block(x);
                for (off, f) in self.blocks() {
                    let d = f.dim();
                    r += f.algebra_residual(&x.view((off, off), (d, d)).into_owned());
                }
                r
            }
        }
    }

    /// Random algebra element with entries of size about `scale`.
    pub fn random_algebra<R: Rng>(&self, rng: &mut R, scale: f64) -> CMat {
        let n = self.dim();
        match self {
            GroupFamily::Trivial => CMat::zeros(1, 1),
            GroupFamily::Unitary(_) | GroupFamily::SpecialUnitary(_) => {
                let m = CMat::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                let mut x = (&m - m.adjoint()).map(|z| z * 0.5 * scale);
                if matches!(self, GroupFamily::SpecialUnitary(_)) {
                    let t = x.trace() / n as f64;
                    for k in 0..n {
                        x[(k, k)] -= t;
                    }
                }
                x
            }
            GroupFamily::Torus(_) => {
                CMat::from_fn(n, n, |i, j| if i == j { c(0., scale * rng.gen_range(-1.0..1.0)) } else { c(0., 0.) })
            }
            GroupFamily::Rotation3 => {
                let m = CMat::from_fn(3, 3, |_, _| c(rng.gen_range(-1.0..1.0), 0.));
                (&m - m.transpose()).map(|z| z * 0.5 * scale)
            }
            GroupFamily::Product(_) => {
                let mut x = CMat::zeros(n, n);
                for (off, f) in self.blocks() {
                    let d = f.dim();
                    x.view_mut((off, off), (d, d)).copy_from(&f.random_algebra(rng, scale));
                }
                x
            }
        }
    }
}

/// An element of `H`, `E` or `G` with its tag.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    pub tag: Tag,
    pub m: CMat,
}

/// An element of `L(H)`, `L(E)` or `L(G)` with its tag.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement {
    pub tag: Tag,
    pub m: CMat,
}

fn check_tag(a: Tag, b: Tag) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::TagMismatch { expected: a, found: b })
    }
}

impl GroupElement {
    pub fn new(tag: Tag, m: CMat) -> Self {
        GroupElement { tag, m }
    }

    pub fn identity(tag: Tag, n: usize) -> Self {
        GroupElement { tag, m: CMat::identity(n, n) }
    }

    pub fn mul(&self, o: &GroupElement) -> Result<GroupElement> {
        check_tag(self.tag, o.tag)?;
        if self.m.ncols() != o.m.nrows() {
            return Err(Error::Shape(format!("{}x{} · {}x{}", self.m.nrows(), self.m.ncols(), o.m.nrows(), o.m.ncols())));
        }
        Ok(GroupElement { tag: self.tag, m: &self.m * &o.m })
    }

    /// Inverse; every supported family is unitary, so this is the adjoint.
    pub fn inv(&self) -> GroupElement {
        GroupElement { tag: self.tag, m: self.m.adjoint() }
    }

    /// `by⁻¹ · self · by`.
    pub fn conj(&self, by: &GroupElement) -> Result<GroupElement> {
        by.inv().mul(self)?.mul(by)
    }

    pub fn distance(&self, o: &GroupElement) -> Result<f64> {
        check_tag(self.tag, o.tag)?;
        Ok((&self.m - &o.m).norm())
    }
}

impl AlgebraElement {
    pub fn new(tag: Tag, m: CMat) -> Self {
        AlgebraElement { tag, m }
    }

    pub fn exp(&self) -> GroupElement {
        GroupElement { tag: self.tag, m: expm(&self.m) }
    }

    pub fn add(&self, o: &AlgebraElement) -> Result<AlgebraElement> {
        check_tag(self.tag, o.tag)?;
        Ok(AlgebraElement { tag: self.tag, m: &self.m + &o.m })
    }

    pub fn scale(&self, s: f64) -> AlgebraElement {
        AlgebraElement { tag: self.tag, m: self.m.map(|z| z * s) }
    }

    pub fn bracket(&self, o: &AlgebraElement) -> Result<AlgebraElement> {
        check_tag(self.tag, o.tag)?;
        Ok(AlgebraElement { tag: self.tag, m: commutator(&self.m, &o.m) })
    }

    /// `Ad(g) X = g X g⁻¹`.
    pub fn ad(&self, g: &GroupElement) -> Result<AlgebraElement> {
        check_tag(self.tag, g.tag)?;
        Ok(AlgebraElement { tag: self.tag, m: &g.m * &self.m * g.m.adjoint() })
    }
}

/// The concrete extensions shipped with the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtensionKind {
    /// `U(1) → U(1)×U(1) → U(1)`, `ι(h) = diag(h, 1)`, `π(diag(a, b)) = b`.
    SplitTorus,
    /// `U(1) → U(2) → PU(2) ≅ SO(3)`, `ι(h) = h·1`, `π = Ad`.
    ScalarU2,
    /// `U(1) → U(1) → 1`: a bare gerbe.
    Gerbe,
}

/// A central extension `H → E → G` with its structure maps.
#[derive(Clone, Debug, PartialEq)]
pub struct CentralExtension {
    pub kind: ExtensionKind,
    pub h: GroupFamily,
    pub e: GroupFamily,
    pub g: GroupFamily,
}

impl CentralExtension {
    pub fn new(kind: ExtensionKind) -> Self {
        let (h, e, g) = match kind {
            ExtensionKind::SplitTorus => (GroupFamily::Unitary(1), GroupFamily::Torus(2), GroupFamily::Unitary(1)),
            ExtensionKind::ScalarU2 => (GroupFamily::Unitary(1), GroupFamily::Unitary(2), GroupFamily::Rotation3),
            ExtensionKind::Gerbe => (GroupFamily::Unitary(1), GroupFamily::Unitary(1), GroupFamily::Trivial),
        };
        CentralExtension { kind, h, e, g }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ExtensionKind::SplitTorus => "split-torus",
            ExtensionKind::ScalarU2 => "scalar-u2",
            ExtensionKind::Gerbe => "gerbe",
        }
    }

    pub fn family(&self, tag: Tag) -> &GroupFamily {
        match tag {
            Tag::H => &self.h,
            Tag::E => &self.e,
            Tag::G => &self.g,
        }
    }

    pub fn dim(&self, tag: Tag) -> usize {
        self.family(tag).dim()
    }

    /// `ι : H → E` on a unit complex number.
    pub fn include(&self, h: C64) -> CMat {
        match self.kind {
            ExtensionKind::SplitTorus => {
                let mut m = CMat::identity(2, 2);
                m[(0, 0)] = h;
                m
            }
            ExtensionKind::ScalarU2 => CMat::identity(2, 2).map(|z| z * h),
            ExtensionKind::Gerbe => scalar(h),
        }
    }

    /// `dι : L(H) → L(E)`.
    pub fn include_algebra(&self, x: C64) -> CMat {
        match self.kind {
            ExtensionKind::SplitTorus => {
                let mut m = CMat::zeros(2, 2);
                m[(0, 0)] = x;
                m
            }
            ExtensionKind::ScalarU2 => CMat::identity(2, 2).map(|z| z * x),
            ExtensionKind::Gerbe => scalar(x),
        }
    }

    /// `π : E → G`.
    pub fn project(&self, e: &CMat) -> CMat {
        match self.kind {
            ExtensionKind::SplitTorus => scalar(e[(1, 1)]),
            ExtensionKind::ScalarU2 => {
                let det = e.determinant();
                let ph = det.sqrt();
                let u = e.map(|z| z / ph);
                let ud = u.adjoint();
                let s: Vec<CMat> = (0..3).map(pauli).collect();
                CMat::from_fn(3, 3, |a, b| c((&s[a] * &u * &s[b] * &ud).trace().re * 0.5, 0.))
            }
            ExtensionKind::Gerbe => CMat::identity(1, 1),
        }
    }

    /// `dπ : L(E) → L(G)`.
    pub fn project_algebra(&self, x: &CMat) -> CMat {
        match self.kind {
            ExtensionKind::SplitTorus => scalar(x[(1, 1)]),
            ExtensionKind::ScalarU2 => {
                let s: Vec<CMat> = (0..3).map(pauli).collect();
                CMat::from_fn(3, 3, |a, b| c((&s[a] * commutator(x, &s[b])).trace().re * 0.5, 0.))
            }
            ExtensionKind::Gerbe => CMat::zeros(1, 1),
        }
    }

    /// A local section of `π`, defined near the identity of `G`.
    pub fn section(&self, g: &CMat) -> Result<CMat> {
        match self.kind {
            ExtensionKind::SplitTorus => {
                let mut m = CMat::identity(2, 2);
                m[(1, 1)] = g[(0, 0)];
                Ok(m)
            }
            ExtensionKind::ScalarU2 => {
                // q ∝ 1 + Σ R_ab σ_a σ_b for q ∈ SU(2) with Ad q = R.
                let mut m = CMat::identity(2, 2);
                for a in 0..3 {
                    for b in 0..3 {
                        m += pauli(a) * pauli(b) * g[(a, b)];
                    }
                }
                let det = m.determinant();
                if det.norm() < 1e-6 {
                    return Err(Error::SectionUndefined);
                }
                let mut q = m.map(|z| z / det.sqrt());
                if q.trace().re < 0.0 {
                    q = -q;
                }
                Ok(q)
            }
            ExtensionKind::Gerbe => Ok(CMat::identity(1, 1)),
        }
    }

    /// Projects an element of `E` close to `ι(H)` onto `H`; returns `(h, residual)`.
    pub fn central_part(&self, x: &CMat) -> (C64, f64) {
        let h = match self.kind {
            ExtensionKind::SplitTorus | ExtensionKind::Gerbe => x[(0, 0)],
            ExtensionKind::ScalarU2 => x.trace() * 0.5,
        };
        let h = h / h.norm();
        (h, (x - self.include(h)).norm())
    }

    /// Projects an element of `L(E)` onto `dι(L(H))`.
    pub fn algebra_central_part(&self, x: &CMat) -> C64 {
        match self.kind {
            ExtensionKind::SplitTorus | ExtensionKind::Gerbe => x[(0, 0)],
            ExtensionKind::ScalarU2 => x.trace() * 0.5,
        }
    }

    // Tagged wrappers.

    pub fn iota(&self, h: &GroupElement) -> Result<GroupElement> {
        check_tag(Tag::H, h.tag)?;
        Ok(GroupElement::new(Tag::E, self.include(h.m[(0, 0)])))
    }

    pub fn pi(&self, e: &GroupElement) -> Result<GroupElement> {
        check_tag(Tag::E, e.tag)?;
        Ok(GroupElement::new(Tag::G, self.project(&e.m)))
    }

    pub fn d_pi(&self, x: &AlgebraElement) -> Result<AlgebraElement> {
        check_tag(Tag::E, x.tag)?;
        Ok(AlgebraElement::new(Tag::G, self.project_algebra(&x.m)))
    }

    pub fn local_section(&self, g: &GroupElement) -> Result<GroupElement> {
        check_tag(Tag::G, g.tag)?;
        Ok(GroupElement::new(Tag::E, self.section(&g.m)?))
    }

    /// Checks membership of a tagged element.
    pub fn check_group(&self, x: &GroupElement, tol: f64) -> Result<()> {
        let f = self.family(x.tag);
        let r = f.group_residual(&x.m);
        if r <= tol {
            Ok(())
        } else {
            Err(Error::NotInGroup { group: f.name(), residual: r })
        }
    }

    pub fn check_algebra(&self, x: &AlgebraElement, tol: f64) -> Result<()> {
        let f = self.family(x.tag);
        let r = f.algebra_residual(&x.m);
        if r <= tol {
            Ok(())
        } else {
            Err(Error::NotInAlgebra { group: f.name(), residual: r })
        }
    }

    pub fn random_element<R: Rng>(&self, tag: Tag, rng: &mut R) -> GroupElement {
        let x = self.family(tag).random_algebra(rng, 2.0);
        GroupElement::new(tag, expm(&x))
    }

    /// The unique `h` with `e·ι(h) = e2`, if `e` and `e2` share a fibre.
    pub fn fiber_normalize(&self, e: &GroupElement, e2: &GroupElement, tol_fiber: f64) -> Result<(GroupElement, f64)> {
        check_tag(Tag::E, e.tag)?;
        check_tag(Tag::E, e2.tag)?;
        let dg = (self.project(&e.m) - self.project(&e2.m)).norm();
        if dg > tol_fiber {
            return Err(Error::NotSameFiber { residual: dg });
        }
        let x = e.m.adjoint() * &e2.m;
        let (h, r) = self.central_part(&x);
        if r > tol_fiber {
            return Err(Error::NotCentralFiber { residual: r });
        }
        let residual = (&e.m * self.include(h) - &e2.m).norm();
        Ok((GroupElement::new(Tag::H, scalar(h)), residual))
    }

    /// Principal logarithm in `L(H)`.
    pub fn h_log(&self, h: C64) -> C64 {
        let l = log_unit(h);
        c(0.0, l.im)
    }
}

/// `∏ exp(Ω_k)` over `[t0, t1]` for `U' = U·A(t)`, fourth-order Magnus with
/// two Gauss nodes per step.
pub fn path_ordered_exp<F>(mut a: F, t0: f64, t1: f64, steps: usize, n: usize) -> Result<CMat>
where
    F: FnMut(f64) -> Result<CMat>,
{
    let steps = steps.max(1);
    let h = (t1 - t0) / steps as f64;
    let off = h * (3f64.sqrt() / 6.0);
    let k = h * h * (3f64.sqrt() / 12.0);
    let mut u = CMat::identity(n, n);
    for i in 0..steps {
        let mid = t0 + (i as f64 + 0.5) * h;
        let a1 = a(mid - off)?;
        let a2 = a(mid + off)?;
        let omega = (&a1 + &a2) * c(h * 0.5, 0.) + commutator(&a1, &a2) * c(k, 0.);
        u = u * expm(&omega);
    }
    Ok(u)
}

/// Midpoint product `∏ exp(A(t_k) Δt)`, second order; used as an oracle.
pub fn riemann_product<F>(mut a: F, t0: f64, t1: f64, n_factors: usize, n: usize) -> Result<CMat>
where
    F: FnMut(f64) -> Result<CMat>,
{
    let h = (t1 - t0) / n_factors as f64;
    let mut u = CMat::identity(n, n);
    for i in 0..n_factors {
        let t = t0 + (i as f64 + 0.5) * h;
        u = u * expm(&(a(t)? * c(h, 0.)));
    }
    Ok(u)
}
