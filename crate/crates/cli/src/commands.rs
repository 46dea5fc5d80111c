//! One function per subcommand; each fills a `Report`.

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{complex, matrix, vector, Report};
use holotwist_core::catalog::{default_cylinders, deform, CylinderSpec, ThinDeformation};
use holotwist_core::catgroup::{compose, morphism_eq, tensor, Morphism};
use holotwist_core::cech::{gauge_transform, is_flat, random_gauge, validate, TwistedBundle};
use holotwist_core::families::examples;
use holotwist_core::geometry::{AssignOptions, ChartPreference, Cylinder, Loop};
use holotwist_core::holonomy::{assign_loop, hol0, hol1, holonomy_functor, kapustin_trace, FunctorValue, HolonomyOptions};
use holotwist_core::lie::{GroupElement, Tag};
use holotwist_core::reconstruct::{
    oracle_options, round_trip_check, BasepointScaffold, BundleOracle, Reconstruction, RoundTripOptions,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::sync::Arc;

type Res<T> = Result<T, CliError>;

pub const COMMANDS: [&str; 11] =
    ["validate", "hol0", "hol1", "surface", "functor", "trace", "gauge", "reconstruct", "roundtrip", "verify", "list-examples"];

pub fn run(command: &str, cfg: &RunConfig, report: &mut Report) -> Res<()> {
    if command == "list-examples" {
        return list_examples(report);
    }
    let spec = cfg.family_spec()?;
    let path = if cfg.family.is_some() { "family" } else { "example" };
    let b = spec.build().map_err(|e| CliError::at(path, "building the bundle", e))?;
    report.set("bundle", json!({ "name": b.name, "model": spec.model(), "extension": b.ext.kind, "charts": b.cover.len() }));
    match command {
        "validate" => cmd_validate(&b, cfg, report),
        "hol0" | "hol1" => cmd_hol(&b, cfg, command == "hol0", report),
        "surface" => cmd_surface(&b, cfg, report),
        "functor" => cmd_functor(&b, cfg, report),
        "trace" => cmd_trace(&b, cfg, report),
        "gauge" => cmd_gauge(&b, cfg, report),
        "reconstruct" => cmd_reconstruct(&b, cfg, report),
        "roundtrip" => cmd_roundtrip(&b, cfg, report),
        "verify" => cmd_verify(&b, cfg, report),
        other => Err(CliError::config("", format!("unknown command `{other}`"))),
    }
}

fn domain(context: &str) -> impl Fn(holotwist_core::Error) -> CliError + '_ {
    move |e| CliError::at("", context, e)
}

fn the_loop(b: &TwistedBundle, cfg: &RunConfig) -> Res<Loop> {
    let spec = cfg.loop_.as_ref().ok_or_else(|| CliError::config("loop", "this command needs a `loop`"))?;
    spec.build(&b.model).map_err(|e| CliError::at("loop", "building the loop", e))
}

/// The configured cylinder, or the first catalog cylinder of the model.
fn the_cylinder(b: &TwistedBundle, cfg: &RunConfig) -> Res<(CylinderSpec, Cylinder)> {
    let spec = match &cfg.cylinder {
        Some(s) => s.clone(),
        None => default_cylinders(b.model.kind).remove(0),
    };
    let c = spec.build(&b.model).map_err(|e| CliError::at("cylinder", "building the cylinder", e))?;
    Ok((spec, c))
}

fn battery(b: &TwistedBundle, cfg: &RunConfig, default_len: usize) -> Res<Vec<(String, Cylinder)>> {
    let specs = match &cfg.battery {
        Some(v) => v.clone(),
        None => default_cylinders(b.model.kind).into_iter().take(default_len).collect(),
    };
    specs
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let c = s.build(&b.model).map_err(|e| CliError::at(&format!("battery[{k}]"), "building a battery cylinder", e))?;
            Ok((serde_json::to_string(s).unwrap_or_default(), c))
        })
        .collect()
}

fn residual(b: &TwistedBundle, m1: &Morphism, m2: &Morphism) -> f64 {
    morphism_eq(&b.ext, m1, m2, 0.0).residual
}

fn functor(b: &TwistedBundle, c: &Cylinder, o: &HolonomyOptions) -> Res<FunctorValue> {
    holonomy_functor(b, c, o).map_err(|e| CliError::at("cylinder", "computing the holonomy functor", e))
}

fn morphism_json(b: &TwistedBundle, m: &Morphism) -> Value {
    json!({
        "source": matrix(&m.source.m),
        "target": matrix(&m.target.m),
        "source_object": matrix(&b.ext.project(&m.source.m)),
        "target_object": matrix(&b.ext.project(&m.target.m)),
    })
}

/// A second, independently seeded and refined chart assignment.
fn other_subdivision(o: &HolonomyOptions, seed: u64) -> HolonomyOptions {
    HolonomyOptions {
        assign: AssignOptions { preference: ChartPreference::Seeded(seed), refine: o.assign.refine + 1, ..o.assign },
        ..*o
    }
}

const DEFORMATIONS: [(&str, ThinDeformation); 2] =
    [("thin warp", ThinDeformation::Warp { s: 0.6, t: -0.5 }), ("thin fold", ThinDeformation::Fold { amplitude: 0.4 })];

fn cmd_validate(b: &TwistedBundle, cfg: &RunConfig, report: &mut Report) -> Res<()> {
    let tol = cfg.tol.unwrap_or(cfg.cech_tol);
    let v = validate(b, cfg.samples, tol, cfg.seed).map_err(domain("validating the bundle"))?;
    for c in &v.checks {
        report.check(&c.name, c.max_residual, tol);
    }
    let flat = is_flat(b, cfg.samples, tol, cfg.seed).map_err(domain("checking flatness"))?;
    report.set("samples_per_region", json!(cfg.samples));
    report.set("flat_bundle", json!(flat.flat_bundle));
    report.set("flat_connection", json!(flat.flat_connection));
    report.set("curvature", json!(flat.curvature));
    Ok(())
}

fn cmd_hol(b: &TwistedBundle, cfg: &RunConfig, base: bool, report: &mut Report) -> Res<()> {
    let l = the_loop(b, cfg)?;
    let o = HolonomyOptions { estimate_error: true, ..cfg.holonomy };
    let sub = assign_loop(b, &l, &o).map_err(domain("assigning charts to the loop"))?;
    let h = if base { hol0(b, &l, &sub, &o) } else { hol1(b, &l, &sub, &o) }.map_err(domain("transporting along the loop"))?;
    let group = if base { &b.ext.g } else { &b.ext.e };
    report.set("value", matrix(&h.value.m));
    if !base {
        report.set("object", matrix(&b.ext.project(&h.value.m)));
    }
    report.set("subdivision", json!({ "breaks": sub.breaks, "charts": sub.charts }));
    report.set("error_estimate", json!(h.error_estimate));
    report.check("group membership", group.group_residual(&h.value.m), cfg.tol.unwrap_or(1e-9));
    Ok(())
}

fn cmd_surface(b: &TwistedBundle, cfg: &RunConfig, report: &mut Report) -> Res<()> {
    let (spec, c) = the_cylinder(b, cfg)?;
    let v = functor(b, &c, &cfg.holonomy)?;
    let e = &v.epsilon;
    report.set("cylinder", json!(spec));
    report.set(
        "epsilon",
        json!({
            "faces": complex(e.faces), "edges": complex(e.edges), "vertices": complex(e.vertices),
            "log": complex(e.log), "value": complex(e.value),
        }),
    );
    report.set("grid", json!({ "rows": v.rect.ns(), "columns": v.rect.nt() }));
    let closed = c.start_loop().is_constant(&b.model, 256) && c.end_loop().is_constant(&b.model, 256);
    report.set("closed", json!(closed));
    if closed {
        // Only closed surfaces have a subdivision-independent ε.
        let tol = cfg.tol.unwrap_or(1e-6);
        let w = functor(b, &c, &other_subdivision(&cfg.holonomy, cfg.seed))?;
        report.check("refined grid", (w.epsilon.value - e.value).norm(), tol);
    }
    Ok(())
}

fn cmd_functor(b: &TwistedBundle, cfg: &RunConfig, report: &mut Report) -> Res<()> {
    let tol = cfg.tol.unwrap_or(1e-6);
    let (spec, c) = the_cylinder(b, cfg)?;
    let o = cfg.holonomy;
    let v = functor(b, &c, &o)?;
    report.set("cylinder", json!(spec));
    report.set("morphism", morphism_json(b, &v.morphism));
    report.set("epsilon", complex(v.epsilon.value));
    let other = functor(b, &c, &other_subdivision(&o, cfg.seed))?;
    report.check("second subdivision", residual(b, &v.morphism, &other.morphism), tol);
    for (name, d) in DEFORMATIONS {
        let w = functor(b, &deform(&c, d), &o)?;
        report.check(name, residual(b, &v.morphism, &w.morphism), tol);
    }
    Ok(())
}

fn cmd_trace(b: &TwistedBundle, cfg: &RunConfig, report: &mut Report) -> Res<()> {
    let tol = cfg.tol.unwrap_or(1e-6);
    let (spec, c) = the_cylinder(b, cfg)?;
    let o = cfg.holonomy;
    let trace = |b: &TwistedBundle, o: &HolonomyOptions| kapustin_trace(b, &c, o).map_err(|e| CliError::at("cylinder", "computing the trace", e));
    let t = trace(b, &o)?;
    report.set("cylinder", json!(spec));
    report.set("trace", complex(t));
    let refined = HolonomyOptions { assign: AssignOptions { refine: o.assign.refine + 1, ..o.assign }, ..o };
    report.check("refined interior", (trace(b, &refined)? - t).norm(), tol);
    let g = random_gauge(b, cfg.seed, cfg.gauge.amplitude).map_err(domain("drawing a gauge"))?;
    let b2 = gauge_transform(b, &g).map_err(domain("applying the gauge"))?;
    report.check("gauge", (trace(&b2, &o)? - t).norm(), tol);
    Ok(())
}

/// Largest deviation of `H'` from the conjugate of `H` over `cyls`, plus
/// the validation residual of the transformed bundle.
fn gauge_residuals(b: &TwistedBundle, cfg: &RunConfig, seed: u64, cyls: &[(String, Cylinder)]) -> Res<(f64, f64)> {
    let g = random_gauge(b, seed, cfg.gauge.amplitude).map_err(domain("drawing a gauge"))?;
    let b2 = gauge_transform(b, &g).map_err(domain("applying the gauge"))?;
    let valid = validate(&b2, cfg.samples, cfg.cech_tol, seed).map_err(domain("validating the gauged bundle"))?.max_residual();
    let mut worst: f64 = 0.0;
    for (_, c) in cyls {
        let v = functor(b, c, &cfg.holonomy)?;
        let chart = v.start.subdivision.charts[0];
        let lift = GroupElement::new(Tag::E, g.e[chart].eval(&b.model.basepoint).map_err(domain("evaluating the gauge"))?);
        let gg = GroupElement::new(Tag::G, b.ext.project(&lift.m));
        let conj = holotwist_core::holonomy::conjugate_functor(b, &v.morphism, &gg, &lift, 1e-9).map_err(domain("conjugating"))?;
        let w = functor(&b2, c, &cfg.holonomy)?;
        worst = worst.max(residual(b, &conj, &w.morphism));
    }
    Ok((valid, worst))
}

fn cmd_gauge(b: &TwistedBundle, cfg: &RunConfig, report: &mut Report) -> Res<()> {
    let tol = cfg.tol.unwrap_or(1e-6);
    let (spec, c) = the_cylinder(b, cfg)?;
    let cyls = vec![(String::new(), c)];
    let mut rows = Vec::new();
    for k in 0..cfg.gauge.count as u64 {
        let seed = cfg.seed + k;
        let (valid, conj) = gauge_residuals(b, cfg, seed, &cyls)?;
        report.check(format!("gauge {seed}: transformed bundle validates"), valid, cfg.cech_tol);
        report.check(format!("gauge {seed}: conjugate functor"), conj, tol);
        rows.push(json!({ "seed": seed, "validation": valid, "conjugation": conj }));
    }
    report.set("cylinder", json!(spec));
    report.set("gauges", Value::Array(rows));
    Ok(())
}

fn cmd_reconstruct(b: &TwistedBundle, cfg: &RunConfig, report: &mut Report) -> Res<()> {
    let ropts = cfg.reconstruct.options();
    let tol = cfg.tol.unwrap_or(ropts.tol_rec);
    let scaffold = Arc::new(BasepointScaffold::new(&b.model, b.cover.clone()).map_err(domain("building the scaffold"))?);
    let oracle = Arc::new(BundleOracle::new(b.clone(), oracle_options()));
    let rec = Reconstruction::new(oracle.clone(), scaffold, ropts).map_err(domain("fixing base representatives"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ctx = domain("reconstructing");
    let sample = |idx: &[usize], rng: &mut ChaCha8Rng| {
        b.cover.sample_region(&b.model, idx, rng).ok_or_else(|| CliError::config("", format!("empty region {idx:?}")))
    };

    let (mut anti, mut transitions): (f64, Vec<Value>) = (0.0, Vec::new());
    for &(i, j) in &b.cover.pairs {
        for _ in 0..cfg.reconstruct.points {
            let y = sample(&[i, j], &mut rng)?;
            let e = rec.transition(i, j, &y).map_err(&ctx)?;
            let back = rec.transition(j, i, &y).map_err(&ctx)?;
            anti = anti.max((&back * &e - holotwist_core::lie::eye(e.nrows())).norm());
            transitions.push(json!({ "i": i, "j": j, "point": vector(&y), "e": matrix(&e) }));
        }
    }
    let (mut central, mut cocycles): (f64, Vec<Value>) = (0.0, Vec::new());
    for &(i, j, k) in &b.cover.triples {
        for _ in 0..cfg.reconstruct.points {
            let y = sample(&[i, j, k], &mut rng)?;
            let prod = rec.transition(i, j, &y).map_err(&ctx)? * rec.transition(j, k, &y).map_err(&ctx)? * rec.transition(k, i, &y).map_err(&ctx)?;
            let (h, r) = b.ext.central_part(&prod);
            central = central.max(r);
            cocycles.push(json!({ "i": i, "j": j, "k": k, "point": vector(&y), "h": complex(h) }));
        }
    }
    let (mut alg, mut connections): (f64, Vec<Value>) = (0.0, Vec::new());
    for i in 0..b.cover.len() {
        for _ in 0..cfg.reconstruct.points {
            let y = sample(&[i], &mut rng)?;
            let v = b.model.random_tangent(&y, &mut rng);
            let a = rec.connection(i, &y, &v).map_err(&ctx)?;
            alg = alg.max(b.ext.e.algebra_residual(&a));
            connections.push(json!({ "i": i, "point": vector(&y), "tangent": vector(&v), "a": matrix(&a) }));
        }
    }
    report.check("transition antisymmetry", anti, tol);
    report.check("cocycle is central", central, tol);
    report.check("connection in the Lie algebra", alg, tol);
    report.set("transitions", Value::Array(transitions));
    report.set("cocycles", Value::Array(cocycles));
    report.set("connections", Value::Array(connections));
    report.set("oracle_calls", json!(oracle.calls()));
    Ok(())
}

fn cmd_roundtrip(b: &TwistedBundle, cfg: &RunConfig, report: &mut Report) -> Res<()> {
    let mut ro = RoundTripOptions { reconstruct: cfg.reconstruct.options(), ..RoundTripOptions::default() };
    ro.tol = cfg.tol.unwrap_or(ro.tol);
    let cyls = battery(b, cfg, 3)?;
    let r = round_trip_check(b, &cyls, &ro).map_err(domain("running the round trip"))?;
    for item in &r.items {
        report.check(format!("round trip {}", item.name), item.residual, ro.tol);
    }
    report.set("conjugated", json!(r.conjugated));
    report.set("max_deviation", json!(r.max_deviation));
    report.set("oracle_calls", json!(r.oracle_calls));
    Ok(())
}

fn cmd_verify(b: &TwistedBundle, cfg: &RunConfig, report: &mut Report) -> Res<()> {
    let tol = cfg.tol.unwrap_or(1e-6);
    let o = cfg.holonomy;
    let v = validate(b, cfg.samples, cfg.cech_tol, cfg.seed).map_err(domain("validating the bundle"))?;
    for c in &v.checks {
        report.check(format!("cech {}", c.name), c.max_residual, cfg.cech_tol);
    }
    let cyls = battery(b, cfg, usize::MAX)?;
    let mut values = Vec::new();
    let (mut sub, mut warp, mut fold, mut vert, mut horiz): (f64, f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, (_, c)) in cyls.iter().enumerate() {
        let h = functor(b, c, &o)?;
        values.push(h.morphism.clone());
        sub = sub.max(residual(b, &h.morphism, &functor(b, c, &other_subdivision(&o, cfg.seed + k as u64))?.morphism));
        for (name, d) in DEFORMATIONS {
            let r = residual(b, &h.morphism, &functor(b, &deform(c, d), &o)?.morphism);
            if name == "thin warp" {
                warp = warp.max(r);
            } else {
                fold = fold.max(r);
            }
        }
        let back = c.flip();
        let composite = c.vertical(&back).map_err(domain("stacking cylinders"))?;
        let hb = functor(b, &back, &o)?;
        let comp = compose(&b.ext, &h.morphism, &hb.morphism, 1e-6).map_err(domain("composing morphisms"))?;
        vert = vert.max(residual(b, &comp, &functor(b, &composite, &o)?.morphism));
    }
    for k in 0..cyls.len().saturating_sub(1) {
        let joined = cyls[k].1.horizontal(&cyls[k + 1].1);
        let t = tensor(&values[k], &values[k + 1]).map_err(domain("tensoring morphisms"))?;
        horiz = horiz.max(residual(b, &t, &functor(b, &joined, &o)?.morphism));
    }
    report.check("second subdivision", sub, tol);
    report.check("thin warp", warp, tol);
    report.check("thin fold", fold, tol);
    report.check("vertical composition", vert, tol);
    if cyls.len() > 1 {
        report.check("horizontal composition", horiz, tol);
    }
    let probe = &cyls[..cyls.len().min(2)];
    for k in 0..cfg.gauge.count as u64 {
        let (valid, conj) = gauge_residuals(b, cfg, cfg.seed + k, probe)?;
        report.check(format!("gauge {}: transformed bundle validates", cfg.seed + k), valid, cfg.cech_tol);
        report.check(format!("gauge {}: conjugate functor", cfg.seed + k), conj, tol);
    }
    report.set("cylinders", json!(cyls.len()));
    Ok(())
}

fn list_examples(report: &mut Report) -> Res<()> {
    let list: Vec<Value> = examples()
        .into_iter()
        .map(|(name, spec, about)| json!({ "name": name, "model": spec.model(), "family": spec, "description": about }))
        .collect();
    report.set("examples", Value::Array(list));
    report.set(
        "loops",
        json!(["constant", "pole-circle", "latitude", "winding", "plane-circle", "polygon"]),
    );
    report.set(
        "cylinders",
        json!(["constant-at", "band", "sweep", "bump", "torus-filling", "torus-push", "plane-band", "vertical", "horizontal", "deformed"]),
    );
    Ok(())
}
