//! Acceptance suite: one pass/fail line per criterion.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use kuranishi::atlas::{ibox, AtlasSpec};
use kuranishi::config::Tolerances;
use kuranishi::error::Error;
use kuranishi::fixtures;
use kuranishi::generator::{brute_force_degree, generate, load_problem, problem_by_name};
use kuranishi::perturb::{build_adapted, verify_adapted, BuildOptions, Perturbation};
use kuranishi::pipeline::{run, PipelineConfig, Stage};
use kuranishi::realization::build_cloud;
use kuranishi::refine::{compute_delta_v, compute_sigma, find_tame_shrinking, reduce, ReductionContext, ReductionParams};
use kuranishi::validators::{
    check_additivity, check_cocycle, check_filtration, check_index_condition, check_injectivity_hausdorff, check_tameness,
    CocycleLevel,
};
use kuranishi::vfc::{check_orientation, invariance_check, reverse_orientation, vfc_count, InvarianceOptions};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new() -> Self {
        Outcome { passed: true, detail: String::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if !ok {
            self.passed = false;
            self.detail.push_str(&format!(" [FAILED: {what}]"));
        }
    }

    fn note(&mut self, s: impl AsRef<str>) {
        self.detail.push_str(&format!(" {};", s.as_ref()));
    }

    fn within(&mut self, t: Instant, limit: Duration, what: &str) {
        let e = t.elapsed();
        self.check(e <= limit, format!("{what} took {e:?} > {limit:?}"));
    }
}

fn tol() -> Tolerances {
    Tolerances::default()
}

struct Built {
    atlas: AtlasSpec,
    ctx: ReductionContext,
    p: Perturbation,
}

fn build(a: &AtlasSpec, seed: u64) -> Result<Built, Error> {
    let tol = tol();
    let atlas = find_tame_shrinking(a, 4, false, 12, 1, &tol)?;
    let cloud = build_cloud(&atlas, 12, 1, tol.tau_id)?;
    let ctx = reduce(&atlas, &cloud, &ReductionParams::default())?;
    let p = build_adapted(&atlas, &ctx, seed, &tol, &BuildOptions::default())?;
    Ok(Built { atlas, ctx, p })
}

fn generated(name: &str) -> AtlasSpec {
    let (problem, plan) = load_problem(name).unwrap();
    generate(&problem, &plan, &tol()).unwrap()
}

/// The four problems of the oracle comparison, each as a single-chart
/// fixture and as a generated atlas.
fn count_cases() -> Vec<(String, AtlasSpec, &'static str)> {
    let mut out = Vec::new();
    for (name, fixture) in [("planar", "planar"), ("quartic", "quartic"), ("identity", "identity"), ("cubic", "cubic")] {
        out.push((format!("{name} (single chart)"), fixtures::by_name(fixture).unwrap(), name));
        out.push((format!("{name} (generated)"), generated(name), name));
    }
    out
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    let tol = tol();
    let t = Instant::now();
    let v = check_index_condition(&fixtures::ex_change(), 20, 0, &tol);
    o.check(v.passed(), format!("ex-change index condition {v}"));
    o.within(t, Duration::from_secs(10), "index condition");

    for (name, a, chart) in [
        ("ex-nonlin", fixtures::ex_nonlin(), vec![3u32]),
        ("additive variant", fixtures::ex_nonlin_additive(), vec![3, 4]),
    ] {
        let t = Instant::now();
        let cloud = build_cloud(&a, 20, 0, tol.tau_id).unwrap();
        let v = check_injectivity_hausdorff(&a, &cloud, &tol);
        let w = v.witnesses.iter().find(|w| w.charts == vec![chart.clone()] && w.points.len() == 2);
        o.check(v.failed() && w.is_some(), format!("{name} injectivity witness in U_{chart:?}: {v}"));
        if let Some(w) = w {
            o.note(format!("{name} witness {:?}", w.points));
        }
        o.within(t, Duration::from_secs(10), name);
    }

    let t = Instant::now();
    let a = fixtures::ku30_nonadditive();
    o.check(check_additivity(&a).failed(), "non-additive fixture passes additivity");
    o.check(check_filtration(&a).passed(), "filtration probe fails");
    o.within(t, Duration::from_secs(10), "additivity/filtration");
    o
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let tol = tol();
    let mut atlases: Vec<(String, AtlasSpec)> =
        fixtures::NAMES.iter().map(|n| (n.to_string(), fixtures::by_name(n).unwrap())).collect();
    for n in ["ex-change", "ex-change-bump", "ex-nonlin-additive"] {
        if let Ok(t) = find_tame_shrinking(&fixtures::by_name(n).unwrap(), 4, false, 12, 1, &tol) {
            atlases.push((format!("{n} (tame shrinking)"), t));
        }
    }
    let mut tame = 0;
    for (name, a) in &atlases {
        if !check_tameness(a, 12, 3, &tol).passed() {
            continue;
        }
        tame += 1;
        let v = check_cocycle(a, CocycleLevel::Strong, 16, 0xfe54, &tol);
        let poly = a.changes.values().all(|c| c.phi.is_polynomial());
        let ok = v.passed() && if poly { v.margin == 0.0 } else { v.margin < 1e-9 };
        o.check(ok, format!("{name}: {v}"));
    }
    o.note(format!("{tame} tame atlases checked"));
    o
}

fn criterion_3() -> Outcome {
    let mut o = Outcome::new();
    let single = |a: &AtlasSpec, v: (i64, i64), c: Option<(&str, &str)>, delta: f64| {
        let mut vs = BTreeMap::new();
        vs.insert(vec![1], ibox(&[v]));
        let mut cs = BTreeMap::new();
        if let Some(c) = c {
            cs.insert(vec![1], fixtures::boxes(1, &[&[c]]));
        }
        ReductionContext::from_sets(a, vs, cs, delta)
    };
    let a = fixtures::interval();
    let dv = compute_delta_v(&a, &single(&a, (0, 1), None, 0.1)).unwrap();
    o.check(dv == 0.25, format!("δ_V = {dv}"));
    let eta = single(&a, (0, 1), None, 1.0).eta0();
    o.check((eta - (1.0 - 2f64.powf(-0.25))).abs() < 1e-12, format!("η_0(1) = {eta}"));

    let a = fixtures::identity_line();
    let delta = 0.1;
    let ctx = single(&a, (-1, 1), Some(("-1/2", "1/2")), delta);
    let s = compute_sigma(&a, &ctx).unwrap();
    o.check(s.bound <= 0.5 && s.bound >= 0.5 - delta / 2.0 - s.slack, format!("σ bound {s:?}"));
    o.note(format!("σ bound {:.6} (slack {:.2e})", s.bound, s.slack));
    for c in [0.5, 2.0, 10.0] {
        let t = compute_sigma(&a, &ctx.with_norms(ctx.norms.scaled(c))).unwrap();
        o.check(t.sampled_min == c * s.sampled_min, format!("scale {c}: {} vs {}", t.sampled_min, c * s.sampled_min));
    }
    o
}

fn criterion_4() -> Outcome {
    let mut o = Outcome::new();
    let tol = tol();
    let quartic = generated("quartic");
    o.check(quartic.basic_count == 3, "generated quartic has three basic charts");
    for (name, a) in [("ex-change", fixtures::ex_change()), ("generated quartic", quartic)] {
        let t = Instant::now();
        match build(&a, 5) {
            Ok(b) => {
                let r = verify_adapted(&b.atlas, &b.ctx, &b.p, 0xa11ce, &tol).unwrap();
                for v in &r.verdicts {
                    o.check(v.passed(), format!("{name}: {v}"));
                }
                o.check(r.min_sigma > 1e-6, format!("{name}: σ_min {}", r.min_sigma));
                o.note(format!("{name}: {} zeros, σ_min {:.3e}", r.zeros.len(), r.min_sigma));
            }
            Err(e) => o.check(false, format!("{name}: {e}")),
        }
        o.within(t, Duration::from_secs(60), name);
    }
    o
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new();
    for (name, a, problem) in count_cases() {
        let t = Instant::now();
        let expected = brute_force_degree(&problem_by_name(problem).unwrap()).unwrap();
        match build(&a, 3).and_then(|b| vfc_count(&b.atlas, &b.ctx, &b.p, &tol())) {
            Ok(z) => {
                o.check(z.count == expected, format!("{name}: count {} vs degree {expected}", z.count));
                o.note(format!("{name} {}", z.count));
            }
            Err(e) => o.check(false, format!("{name}: {e}")),
        }
        o.within(t, Duration::from_secs(60), &name);
    }
    o
}

fn criterion_6() -> Outcome {
    let mut o = Outcome::new();
    for (name, a, problem) in count_cases() {
        let expected = brute_force_degree(&problem_by_name(problem).unwrap()).unwrap();
        let tol = tol();
        let r = find_tame_shrinking(&a, 4, false, 12, 1, &tol)
            .and_then(|t| build_cloud(&t, 12, 1, tol.tau_id).map(|c| (t, c)))
            .and_then(|(t, c)| invariance_check(&t, &c, &InvarianceOptions::default(), &tol));
        match r {
            Ok(r) => {
                o.check(r.verdict.passed(), format!("{name}: {}", r.verdict));
                o.check(r.runs.len() == 12, format!("{name}: {} runs", r.runs.len()));
                o.check(r.runs.iter().all(|x| x.count == Some(expected)), format!("{name}: counts differ from {expected}"));
                match &r.concordance {
                    Some(c) => o.check(c.passed && c.boundary == (expected, expected), format!("{name}: concordance {c:?}")),
                    None => o.check(false, format!("{name}: no concordance")),
                }
            }
            Err(e) => o.check(false, format!("{name}: {e}")),
        }
    }
    o
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    let tol = tol();
    for (name, a, _) in count_cases() {
        match build(&a, 3) {
            Ok(b) => {
                let c = vfc_count(&b.atlas, &b.ctx, &b.p, &tol).map(|z| z.count);
                let r = vfc_count(&reverse_orientation(&b.atlas, None), &b.ctx, &b.p, &tol).map(|z| z.count);
                match (c, r) {
                    (Ok(c), Ok(r)) => o.check(r == -c, format!("{name}: {c} reversed to {r}")),
                    (c, r) => o.check(false, format!("{name}: {c:?} / {r:?}")),
                }
            }
            Err(e) => o.check(false, format!("{name}: {e}")),
        }
    }
    for (name, a) in [("ex-change", fixtures::ex_change()), ("generated quartic", generated("quartic"))] {
        let b = build(&a, 3).unwrap();
        let top = b.atlas.index_sets().into_iter().max_by_key(|i| i.len()).unwrap();
        let bad = reverse_orientation(&b.atlas, Some(std::slice::from_ref(&top)));
        let v = check_orientation(&bad, 12, 0, &tol);
        o.check(v.failed(), format!("{name}: reversing {top:?} not detected: {v}"));
        let r = vfc_count(&bad, &b.ctx, &b.p, &tol);
        o.check(matches!(r, Err(Error::Orientation(_))), format!("{name}: count not rejected: {r:?}"));
    }
    o
}

fn criterion_8() -> Outcome {
    let mut o = Outcome::new();
    let cases = [
        ("ex-change", Stage::Validate),
        ("ex-change", Stage::Tame),
        ("ex-change", Stage::Reduce),
        ("ex-change", Stage::Perturb),
        ("ex-change", Stage::Vfc),
        ("gen:planar", Stage::Vfc),
        ("cubic", Stage::Invariance),
        ("quartic", Stage::Generate),
        ("cubic", Stage::Oracle),
    ];
    for (atlas, stage) in cases {
        let cfg = PipelineConfig::new(atlas, stage);
        let (r1, p1) = run(&cfg);
        let (r2, p2) = run(&cfg);
        let same = r1.to_json() == r2.to_json()
            && serde_json::to_string(&p1).unwrap() == serde_json::to_string(&p2).unwrap();
        o.check(same, format!("{stage} on {atlas} differs between runs"));
        o.check(r1.passed, format!("{stage} on {atlas}: {:?}", r1.first_failure));
    }
    o
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("fixture verdicts", criterion_1),
        ("tameness implies strong cocycle", criterion_2),
        ("constants", criterion_3),
        ("adapted perturbation ledger", criterion_4),
        ("count vs degree oracle", criterion_5),
        ("invariance", criterion_6),
        ("orientation functoriality", criterion_7),
        ("determinism", criterion_8),
    ];
    let mut failed = Vec::new();
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = f();
        let status = if out.passed { "PASS" } else { "FAIL" };
        println!("criterion {}: {status} {name} ({:.1?}){}", k + 1, t.elapsed(), out.detail);
        if !out.passed {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
