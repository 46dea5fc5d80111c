//! The categorical group `E × E / H ⇉ G` attached to a central extension.
//!
//! A morphism is the class of a pair `[e₁, e₂]` under `(e₁, e₂) ~ (e₁h, e₂h)`;
//! it goes from `π(e₁)` to `π(e₂)`. Composition is diagrammatic:
//! `[e₁, e₂h] ∘ [e₂, e₃] = [e₁, e₃h]`.

use crate::error::{Error, Result};
use crate::lie::{CentralExtension, GroupElement, Tag};

#[derive(Clone, Debug, PartialEq)]
pub struct Morphism {
    pub source: GroupElement,
    pub target: GroupElement,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Equality {
    pub equal: bool,
    pub residual: f64,
}

impl Morphism {
    pub fn new(source: GroupElement, target: GroupElement) -> Result<Morphism> {
        for x in [&source, &target] {
            if x.tag != Tag::E {
                return Err(Error::TagMismatch { expected: Tag::E, found: x.tag });
            }
        }
        Ok(Morphism { source, target })
    }

    pub fn source_object(&self, ext: &CentralExtension) -> GroupElement {
        GroupElement::new(Tag::G, ext.project(&self.source.m))
    }

    pub fn target_object(&self, ext: &CentralExtension) -> GroupElement {
        GroupElement::new(Tag::G, ext.project(&self.target.m))
    }

    /// Representative with source `s`, if `s` lies over the same object.
    pub fn with_source(&self, ext: &CentralExtension, s: &GroupElement, tol_fiber: f64) -> Result<Morphism> {
        let (h, _) = ext.fiber_normalize(&self.source, s, tol_fiber)?;
        let t = self.target.mul(&ext.iota(&h)?)?;
        Ok(Morphism { source: s.clone(), target: t })
    }
}

/// Diagrammatic composite `m1` then `m2`.
pub fn compose(ext: &CentralExtension, m1: &Morphism, m2: &Morphism, tol_fiber: f64) -> Result<Morphism> {
    let (h, _) = match ext.fiber_normalize(&m2.source, &m1.target, tol_fiber) {
        Ok(x) => x,
        Err(Error::NotSameFiber { residual }) => return Err(Error::NotComposable { residual }),
        Err(e) => return Err(e),
    };
    Ok(Morphism { source: m1.source.clone(), target: m2.target.mul(&ext.iota(&h)?)? })
}

/// Monoidal product `[e₁e₃, e₂e₄]`.
pub fn tensor(m1: &Morphism, m2: &Morphism) -> Result<Morphism> {
    Ok(Morphism { source: m1.source.mul(&m2.source)?, target: m1.target.mul(&m2.target)? })
}

pub fn inverse(m: &Morphism) -> Morphism {
    Morphism { source: m.target.clone(), target: m.source.clone() }
}

/// Identity `[s(g), s(g)]` through the local section.
pub fn identity_of(ext: &CentralExtension, g: &GroupElement) -> Result<Morphism> {
    let s = ext.local_section(g)?;
    Ok(Morphism { source: s.clone(), target: s })
}

/// Class equality: `a⁻¹a' = b⁻¹b'` with both in `ι(H)`.
pub fn morphism_eq(ext: &CentralExtension, m1: &Morphism, m2: &Morphism, tol: f64) -> Equality {
    let d1 = m1.source.inv().m * &m2.source.m;
    let d2 = m1.target.inv().m * &m2.target.m;
    let (_, central) = ext.central_part(&d1);
    let residual = (&d1 - &d2).norm().max(central);
    Equality { equal: residual <= tol, residual }
}

/// `[g⁻¹e₁g, g⁻¹e₂g]` for a lift `g ∈ E`.
pub fn conjugate(m: &Morphism, lift: &GroupElement) -> Result<Morphism> {
    Ok(Morphism { source: m.source.conj(lift)?, target: m.target.conj(lift)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{c, ExtensionKind};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn phase(t: f64) -> GroupElement {
        GroupElement::new(Tag::H, crate::lie::scalar(c(t.cos(), t.sin())))
    }

    fn kinds() -> [ExtensionKind; 3] {
        [ExtensionKind::SplitTorus, ExtensionKind::ScalarU2, ExtensionKind::Gerbe]
    }

    #[test]
    fn composition_shifts_by_the_fibre_element() {
        let ext = CentralExtension::new(ExtensionKind::ScalarU2);
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let e1 = ext.random_element(Tag::E, &mut r);
        let e2 = ext.random_element(Tag::E, &mut r);
        let e3 = ext.random_element(Tag::E, &mut r);
        let h = ext.iota(&phase(0.7)).unwrap();
        let m1 = Morphism::new(e1.clone(), e2.mul(&h).unwrap()).unwrap();
        let m2 = Morphism::new(e2, e3.clone()).unwrap();
        let m = compose(&ext, &m1, &m2, 1e-7).unwrap();
        assert!(m.target.distance(&e3.mul(&h).unwrap()).unwrap() < 1e-14);
        assert!(m.source.distance(&e1).unwrap() < 1e-14);
    }

    #[test]
    fn non_composable_pairs_are_rejected() {
        let ext = CentralExtension::new(ExtensionKind::SplitTorus);
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let a = ext.random_element(Tag::E, &mut r);
        let b = ext.random_element(Tag::E, &mut r);
        let m1 = Morphism::new(a.clone(), b).unwrap();
        let m2 = Morphism::new(a.clone(), a).unwrap();
        assert!(matches!(compose(&ext, &m1, &m2, 1e-7), Err(Error::NotComposable { .. })));
    }

    #[test]
    fn class_equality_ignores_common_central_shift() {
        let ext = CentralExtension::new(ExtensionKind::ScalarU2);
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let a = ext.random_element(Tag::E, &mut r);
        let b = ext.random_element(Tag::E, &mut r);
        let h = ext.iota(&phase(2.1)).unwrap();
        let m = Morphism::new(a.clone(), b.clone()).unwrap();
        let m2 = Morphism::new(a.mul(&h).unwrap(), b.mul(&h).unwrap()).unwrap();
        assert!(morphism_eq(&ext, &m, &m2, 1e-12).equal);
        let m3 = Morphism::new(a, b.mul(&h).unwrap()).unwrap();
        assert!(!morphism_eq(&ext, &m, &m3, 1e-6).equal);
    }

    fn random_quadruple(
        ext: &CentralExtension,
        r: &mut ChaCha8Rng,
    ) -> (Morphism, Morphism, Morphism, Morphism) {
        let pair = |r: &mut ChaCha8Rng| {
            let a = ext.random_element(Tag::E, r);
            let b = ext.random_element(Tag::E, r);
            let c2 = ext.random_element(Tag::E, r);
            let h = ext.iota(&phase(rand::Rng::gen_range(r, -3.0..3.0))).unwrap();
            (Morphism::new(a, b.mul(&h).unwrap()).unwrap(), Morphism::new(b, c2).unwrap())
        };
        let (m1, m2) = pair(r);
        let (m3, m4) = pair(r);
        (m1, m2, m3, m4)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn interchange_associativity_units_inverses(seed in any::<u64>(), k in 0usize..3) {
            let ext = CentralExtension::new(kinds()[k]);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let tol = 1e-9;
            let (m1, m2, m3, m4) = random_quadruple(&ext, &mut r);
            let lhs = tensor(&compose(&ext, &m1, &m2, 1e-7).unwrap(), &compose(&ext, &m3, &m4, 1e-7).unwrap()).unwrap();
            let rhs = compose(&ext, &tensor(&m1, &m3).unwrap(), &tensor(&m2, &m4).unwrap(), 1e-7).unwrap();
            prop_assert!(morphism_eq(&ext, &lhs, &rhs, tol).equal);

            let c = ext.random_element(Tag::E, &mut r);
            let m5 = Morphism::new(m2.target.clone(), c).unwrap();
            let a = compose(&ext, &compose(&ext, &m1, &m2, 1e-7).unwrap(), &m5, 1e-7).unwrap();
            let b = compose(&ext, &m1, &compose(&ext, &m2, &m5, 1e-7).unwrap(), 1e-7).unwrap();
            prop_assert!(morphism_eq(&ext, &a, &b, tol).equal);

            if ext.kind != ExtensionKind::ScalarU2 || ext.section(&m1.source_object(&ext).m).is_ok() {
                let id = identity_of(&ext, &m1.source_object(&ext)).unwrap();
                let left = compose(&ext, &id, &m1, 1e-7).unwrap();
                prop_assert!(morphism_eq(&ext, &left, &m1, tol).equal);
                let back = compose(&ext, &m1, &inverse(&m1), 1e-7).unwrap();
                prop_assert!(morphism_eq(&ext, &back, &id, tol).equal);
            }
            if ext.kind != ExtensionKind::ScalarU2 || ext.section(&m1.target_object(&ext).m).is_ok() {
                let id = identity_of(&ext, &m1.target_object(&ext)).unwrap();
                let right = compose(&ext, &m1, &id, 1e-7).unwrap();
                prop_assert!(morphism_eq(&ext, &right, &m1, tol).equal);
            }
        }
    }
}
