//! Named atlases used by the examples, the CLI and the test suites.

use crate::atlas::{AtlasKind, AtlasSpec, Chart, CoordinateChange, IndexSet};
use crate::domain::{Constraint, Domain, Piece};
use crate::error::Result;
use crate::linalg::RatMatrix;
use crate::poly::{parse_rat, Rat};
use crate::smooth::{parse_smooth, SmoothMap};

/// Union of boxes given by decimal or fractional endpoint strings.
pub fn boxes(n: usize, pieces: &[&[(&str, &str)]]) -> Domain {
    let r = |s: &str| -> Rat { parse_rat(s).expect("fixture literal") };
    Domain::new(
        n,
        pieces
            .iter()
            .map(|p| Piece::new_box(p.iter().map(|b| r(b.0)).collect(), p.iter().map(|b| r(b.1)).collect()))
            .collect(),
    )
}

/// Box with extra strict inequalities `f > 0`.
pub fn constrained(bounds: &[(&str, &str)], constraints: &[&str]) -> Domain {
    let n = bounds.len();
    let mut d = boxes(n, &[bounds]);
    let mut p = d.pieces()[0].clone();
    for c in constraints {
        p.constraints.push(Constraint::new(parse_smooth(c, n).expect("fixture constraint")));
    }
    d = Domain::new(n, vec![p]);
    d
}

pub fn map(n: usize, comps: &[&str]) -> SmoothMap {
    SmoothMap::parse(n, &comps.iter().map(|s| s.to_string()).collect::<Vec<_>>()).expect("fixture map")
}

pub fn mat(rows: usize, cols: usize, entries: &[i64]) -> RatMatrix {
    let empty: &[i64] = &[];
    let r: Vec<&[i64]> = if cols == 0 { vec![empty; rows] } else { entries.chunks(cols).collect() };
    RatMatrix::from_i64(&r, cols)
}

pub fn chart(index: &[u32], domain: Domain, m: usize, section: &[&str]) -> Chart {
    let n = domain.ambient_dim();
    Chart::new(index.to_vec(), domain, m, map(n, section))
}

pub fn change(source: &[u32], target: &[u32], domain: Domain, phi: &[&str], hat: RatMatrix) -> CoordinateChange {
    let n = domain.ambient_dim();
    CoordinateChange { source: source.to_vec(), target: target.to_vec(), domain, phi: map(n, phi), hat_phi: hat }
}

/// One basic chart with section `section` on a box.
pub fn single(section: &[&str], bounds: &[(&str, &str)]) -> AtlasSpec {
    let m = section.len();
    let c = chart(&[1], boxes(bounds.len(), &[bounds]), m, section);
    AtlasSpec::new(bounds.len() as i64 - m as i64, 1, vec![c], vec![]).expect("single-chart fixture")
}

pub fn identity_line() -> AtlasSpec {
    single(&["x1"], &[("-2", "2")])
}

pub fn quartic() -> AtlasSpec {
    single(&["x1^4 - x1^2"], &[("-2", "2")])
}

pub fn cubic() -> AtlasSpec {
    single(&["x1^3 - x1"], &[("-2", "2")])
}

pub fn shifted_square() -> AtlasSpec {
    single(&["x1^2 - 1"], &[("-2", "2")])
}

pub fn planar() -> AtlasSpec {
    single(&["x1^2 - x2^2 - 1/4", "2*x1*x2"], &[("-2", "2"), ("-2", "2")])
}

/// `s ≡ 1`, no zeros.
pub fn nowhere_zero() -> AtlasSpec {
    single(&["1"], &[("-2", "2")])
}

/// Interval `U = (−1, 2)` used for the separation constant.
pub fn interval() -> AtlasSpec {
    single(&["x1"], &[("-1", "2")])
}

/// `U = (−1, 1)` with no obstruction (`d = 1`).
pub fn free_interval() -> AtlasSpec {
    let c = chart(&[1], boxes(1, &[&[("-1", "1")]]), 0, &[]);
    AtlasSpec::new(1, 1, vec![c], vec![]).expect("fixture")
}

/// The prototypical coordinate change: `s_1(x) = (x²−1)x²` on `(−2,2)`,
/// `s_12(x,y) = ((x²−1)x², y)` on `(−1,2)×(−1,1)`, embedded along `y = 0`.
///
/// A basic chart 2 over the footprint `{0, 1}` completes the index set;
/// it lives on the curve `y = g(x)` with `g = x⁴ − x²` and obstruction
/// line spanned by `(1, 1)`.
pub fn ex_change() -> AtlasSpec {
    ex_change_with("")
}

/// `ex_change` with the zero-free bump `½·bump(3/10; 3/2)` added to both
/// first components.
pub fn ex_change_bump() -> AtlasSpec {
    ex_change_with(" + 1/2*bump(3/10; 3/2)")
}

fn ex_change_with(b: &str) -> AtlasSpec {
    let g = format!("x1^4 - x1^2{b}");
    let g12 = format!("x1^4 - x1^2{}", b.replace("3/2)", "3/2, _)"));
    let c1 = chart(&[1], boxes(1, &[&[("-2", "2")]]), 1, &[&g]);
    let c2 = chart(&[2], constrained(&[("-1", "2")], &[&format!("1 - ({g})")]), 1, &[&g])
        .with_embedding(map(1, &["x1", &g]));
    let c12 = chart(&[1, 2], boxes(2, &[&[("-1", "2"), ("-1", "1")]]), 2, &[&g12, "x2"]);
    let ch1 = change(&[1], &[1, 2], boxes(1, &[&[("-1", "2")]]), &["x1", "0"], mat(2, 1, &[1, 0]));
    let ch2 = change(&[2], &[1, 2], c2.domain.clone(), &["x1", &g], mat(2, 1, &[1, 1]));
    AtlasSpec::new(0, 2, vec![c1, c2, c12], vec![ch1, ch2]).expect("ex_change fixture")
}

/// All seven index sets over three basic charts, `U_I = (−1,1)^{|I|}`,
/// `s_I,i = x_i + x_i³` (optionally plus `½ x_i·bump(1/2; 0)`), with
/// coordinate inclusions. Tame, with chains of length three.
pub fn cube(with_bump: bool) -> AtlasSpec {
    let sets: Vec<IndexSet> = vec![vec![1], vec![2], vec![3], vec![1, 2], vec![1, 3], vec![2, 3], vec![1, 2, 3]];
    let charts = sets
        .iter()
        .map(|s| {
            let n = s.len();
            let bump = format!("bump(1/2; {})", vec!["0"; n].join(", "));
            let comps: Vec<String> = (1..=n)
                .map(|k| {
                    let base = format!("x{k} + x{k}^3");
                    if with_bump {
                        format!("{base} + 1/2*x{k}*{bump}")
                    } else {
                        base
                    }
                })
                .collect();
            let emb: Vec<String> = (1..=3u32)
                .map(|b| match s.iter().position(|&v| v == b) {
                    Some(p) => format!("x{}", p + 1),
                    None => "0".into(),
                })
                .collect();
            let dom = boxes(n, &[&vec![("-1", "1"); n]]);
            Chart::new(s.clone(), dom, n, SmoothMap::parse(n, &comps).expect("cube section"))
                .with_embedding(SmoothMap::parse(n, &emb).expect("cube embedding"))
        })
        .collect();
    let mut changes = Vec::new();
    for i in &sets {
        for j in &sets {
            if i.len() < j.len() && i.iter().all(|v| j.contains(v)) {
                let n = i.len();
                let phi: Vec<String> = j
                    .iter()
                    .map(|v| match i.iter().position(|w| w == v) {
                        Some(p) => format!("x{}", p + 1),
                        None => "0".into(),
                    })
                    .collect();
                let mut hat = RatMatrix::zeros(j.len(), n);
                for (c, v) in i.iter().enumerate() {
                    let r = j.iter().position(|w| w == v).expect("subset");
                    hat.set(r, c, Rat::from_integer(1.into()));
                }
                changes.push(CoordinateChange {
                    source: i.clone(),
                    target: j.clone(),
                    domain: boxes(n, &[&vec![("-1", "1"); n]]),
                    phi: SmoothMap::parse(n, &phi).expect("cube inclusion"),
                    hat_phi: hat,
                });
            }
        }
    }
    AtlasSpec::new(0, 3, charts, changes).expect("cube fixture").with_kind(AtlasKind::Tame)
}

/// Circle atlas in lifted coordinates `(z, x)`, `z` the angle in units of
/// a full turn, all sections `s = x` with `E = R`. The lift of chart 1
/// into chart 13 shifts by one turn while chart 2 lifts by the identity,
/// so two points of `U_3` get identified.
pub fn ex_nonlin() -> AtlasSpec {
    let one = || mat(1, 1, &[1]);
    let u3: &[&[(&str, &str)]] = &[&[("1", "5/3"), ("-1", "1")], &[("0.7", "1.95"), ("0.2", "1")]];
    let u13: &[&[(&str, &str)]] = &[&[("4/3", "5/3"), ("-1", "1")], &[("4/3", "1.95"), ("0.2", "1")]];
    let u23: &[&[(&str, &str)]] = &[&[("1", "4/3"), ("-1", "1")], &[("0.7", "4/3"), ("0.2", "1")]];
    let u12: &[&[(&str, &str)]] = &[&[("2/3", "1"), ("-1", "1")]];
    let charts = vec![
        chart(&[1], boxes(2, &[&[("1/3", "1"), ("-1", "1")]]), 1, &["x2"]),
        chart(&[2], boxes(2, &[&[("2/3", "4/3"), ("-1", "1")]]), 1, &["x2"]),
        chart(&[3], boxes(2, u3), 1, &["x2"]),
        chart(&[1, 2], boxes(2, u12), 1, &["x2"]),
        chart(&[1, 3], boxes(2, u13), 1, &["x2"]),
        chart(&[2, 3], boxes(2, u23), 1, &["x2"]),
    ];
    let shifted: &[&[(&str, &str)]] = &[&[("1/3", "2/3"), ("-1", "1")], &[("1/3", "0.95"), ("0.2", "1")]];
    let changes = vec![
        change(&[1], &[1, 2], boxes(2, u12), &["x1", "x2"], one()),
        change(&[2], &[1, 2], boxes(2, u12), &["x1", "x2"], one()),
        change(&[1], &[1, 3], boxes(2, shifted), &["x1 + 1", "x2"], one()),
        change(&[3], &[1, 3], boxes(2, u13), &["x1", "x2"], one()),
        change(&[2], &[2, 3], boxes(2, u23), &["x1", "x2"], one()),
        change(&[3], &[2, 3], boxes(2, u23), &["x1", "x2"], one()),
    ];
    AtlasSpec::new(1, 3, charts, changes).expect("ex_nonlin fixture")
}

/// Additive completion of the circle atlas: three obstruction-free basic
/// charts over the arcs plus a fourth chart `(1/3, 4/3) × (−1/10, 1/10)`
/// with `E = R`, and every sum chart containing 4 modelled on the thick
/// chart of the non-additive version. Chart 34 plays the role of chart 3.
pub fn ex_nonlin_additive() -> AtlasSpec {
    let one = || mat(1, 1, &[1]);
    let pt = || mat(1, 0, &[]);
    let none = || mat(0, 0, &[]);
    let i = |a: &str, b: &str| boxes(1, &[&[(a, b)]]);
    let eps = ("-1/10", "1/10");
    let u34: &[&[(&str, &str)]] = &[&[("1", "5/3"), ("-1", "1")], &[("0.7", "1.95"), ("0.2", "1")]];
    let u134: &[&[(&str, &str)]] = &[&[("4/3", "5/3"), ("-1", "1")], &[("4/3", "1.95"), ("0.2", "1")]];
    let u234: &[&[(&str, &str)]] = &[&[("1", "4/3"), ("-1", "1")], &[("0.7", "4/3"), ("0.2", "1")]];
    let u124: &[&[(&str, &str)]] = &[&[("2/3", "1"), ("-1", "1")]];
    let u14: &[&[(&str, &str)]] = &[&[("1/3", "1"), ("-1", "1")]];
    let u24: &[&[(&str, &str)]] = &[&[("2/3", "4/3"), ("-1", "1")]];
    let charts = vec![
        chart(&[1], i("1/3", "1"), 0, &[]),
        chart(&[2], i("2/3", "4/3"), 0, &[]),
        chart(&[3], i("1", "5/3"), 0, &[]),
        chart(&[4], boxes(2, &[&[("1/3", "4/3"), eps]]), 1, &["x2"]),
        chart(&[1, 2], i("2/3", "1"), 0, &[]),
        chart(&[1, 3], i("4/3", "5/3"), 0, &[]),
        chart(&[2, 3], i("1", "4/3"), 0, &[]),
        chart(&[1, 4], boxes(2, u14), 1, &["x2"]),
        chart(&[2, 4], boxes(2, u24), 1, &["x2"]),
        chart(&[3, 4], boxes(2, u34), 1, &["x2"]),
        chart(&[1, 2, 4], boxes(2, u124), 1, &["x2"]),
        chart(&[1, 3, 4], boxes(2, u134), 1, &["x2"]),
        chart(&[2, 3, 4], boxes(2, u234), 1, &["x2"]),
    ];
    let lift = &["x1", "0"];
    let lift1 = &["x1 + 1", "0"];
    let id = &["x1", "x2"];
    let shift = &["x1 + 1", "x2"];
    let shifted14: &[&[(&str, &str)]] = &[&[("1/3", "2/3"), ("-1", "1")], &[("1/3", "0.95"), ("0.2", "1")]];
    let changes = vec![
        // arcs into arc overlaps
        change(&[1], &[1, 2], i("2/3", "1"), &["x1"], none()),
        change(&[2], &[1, 2], i("2/3", "1"), &["x1"], none()),
        change(&[1], &[1, 3], i("1/3", "2/3"), &["x1 + 1"], none()),
        change(&[3], &[1, 3], i("4/3", "5/3"), &["x1"], none()),
        change(&[2], &[2, 3], i("1", "4/3"), &["x1"], none()),
        change(&[3], &[2, 3], i("1", "4/3"), &["x1"], none()),
        // arcs into thick charts
        change(&[1], &[1, 4], i("1/3", "1"), lift, pt()),
        change(&[2], &[2, 4], i("2/3", "4/3"), lift, pt()),
        change(&[3], &[3, 4], i("1", "5/3"), lift, pt()),
        change(&[1], &[1, 2, 4], i("2/3", "1"), lift, pt()),
        change(&[2], &[1, 2, 4], i("2/3", "1"), lift, pt()),
        change(&[1], &[1, 3, 4], i("1/3", "2/3"), lift1, pt()),
        change(&[3], &[1, 3, 4], i("4/3", "5/3"), lift, pt()),
        change(&[2], &[2, 3, 4], i("1", "4/3"), lift, pt()),
        change(&[3], &[2, 3, 4], i("1", "4/3"), lift, pt()),
        change(&[1, 2], &[1, 2, 4], i("2/3", "1"), lift, pt()),
        change(&[1, 3], &[1, 3, 4], i("4/3", "5/3"), lift, pt()),
        change(&[2, 3], &[2, 3, 4], i("1", "4/3"), lift, pt()),
        // chart 4
        change(&[4], &[1, 4], boxes(2, &[&[("1/3", "1"), eps]]), id, one()),
        change(&[4], &[2, 4], boxes(2, &[&[("2/3", "4/3"), eps]]), id, one()),
        change(&[4], &[3, 4], boxes(2, &[&[("1", "4/3"), eps]]), id, one()),
        change(&[4], &[1, 2, 4], boxes(2, &[&[("2/3", "1"), eps]]), id, one()),
        change(&[4], &[1, 3, 4], boxes(2, &[&[("1/3", "2/3"), eps]]), shift, one()),
        change(&[4], &[2, 3, 4], boxes(2, &[&[("1", "4/3"), eps]]), id, one()),
        // thick charts into triple sums
        change(&[1, 4], &[1, 2, 4], boxes(2, u124), id, one()),
        change(&[2, 4], &[1, 2, 4], boxes(2, u124), id, one()),
        change(&[1, 4], &[1, 3, 4], boxes(2, shifted14), shift, one()),
        change(&[3, 4], &[1, 3, 4], boxes(2, u134), id, one()),
        change(&[2, 4], &[2, 3, 4], boxes(2, u234), id, one()),
        change(&[3, 4], &[2, 3, 4], boxes(2, u234), id, one()),
    ];
    AtlasSpec::new(1, 4, charts, changes).expect("ex_nonlin_additive fixture")
}

/// Two obstruction-free basic charts on `(0,2)` and `(1,3)` whose sum chart
/// has a three-dimensional obstruction space: the basic images `e₁`, `e₂`
/// do not span it, yet they meet trivially.
pub fn ku30_nonadditive() -> AtlasSpec {
    let c1 = chart(&[1], boxes(1, &[&[("0", "2")]]), 1, &["0"]);
    let c2 = chart(&[2], boxes(1, &[&[("1", "3")]]), 1, &["0"]);
    let c12 = chart(&[1, 2], boxes(3, &[&[("1", "2"), ("-1", "1"), ("-1", "1")]]), 3, &["x2", "x2", "x3"]);
    let i12 = || boxes(1, &[&[("1", "2")]]);
    let changes = vec![
        change(&[1], &[1, 2], i12(), &["x1", "0", "0"], mat(3, 1, &[1, 0, 0])),
        change(&[2], &[1, 2], i12(), &["x1", "0", "0"], mat(3, 1, &[0, 1, 0])),
    ];
    AtlasSpec::new(0, 2, vec![c1, c2, c12], changes).expect("ku30 fixture")
}

/// Truncation of the line-and-half-plane atlas: `U_1 = (−2,2)`,
/// `U_2 = U_12 = (0,2)×(−2,2)` with `s = y`.
pub fn khomeo() -> AtlasSpec {
    let half = || boxes(2, &[&[("0", "2"), ("-2", "2")]]);
    let c1 = chart(&[1], boxes(1, &[&[("-2", "2")]]), 0, &[]);
    let c2 = chart(&[2], half(), 1, &["x2"]);
    let c12 = chart(&[1, 2], half(), 1, &["x2"]);
    let changes = vec![
        change(&[1], &[1, 2], boxes(1, &[&[("0", "2")]]), &["x1", "0"], mat(1, 0, &[])),
        change(&[2], &[1, 2], half(), &["x1", "x2"], mat(1, 1, &[1])),
    ];
    AtlasSpec::new(1, 2, vec![c1, c2, c12], changes).expect("khomeo fixture")
}

/// Look a fixture up by name.
pub fn by_name(name: &str) -> Option<AtlasSpec> {
    Some(match name {
        "identity" => identity_line(),
        "quartic" => quartic(),
        "cubic" => cubic(),
        "shifted-square" => shifted_square(),
        "planar" => planar(),
        "nowhere-zero" => nowhere_zero(),
        "interval" => interval(),
        "free-interval" => free_interval(),
        "ex-change" => ex_change(),
        "ex-change-bump" => ex_change_bump(),
        "cube" => cube(false),
        "cube-bump" => cube(true),
        "ex-nonlin" => ex_nonlin(),
        "ex-nonlin-additive" => ex_nonlin_additive(),
        "ku30" => ku30_nonadditive(),
        "khomeo" => khomeo(),
        _ => return None,
    })
}

pub const NAMES: &[&str] = &[
    "identity",
    "quartic",
    "cubic",
    "shifted-square",
    "planar",
    "nowhere-zero",
    "interval",
    "free-interval",
    "ex-change",
    "ex-change-bump",
    "cube",
    "cube-bump",
    "ex-nonlin",
    "ex-nonlin-additive",
    "ku30",
    "khomeo",
];

/// Fixture, then a document path.
pub fn load(name_or_path: &str) -> Result<AtlasSpec> {
    match by_name(name_or_path) {
        Some(a) => Ok(a),
        None => crate::atlas::parse_atlas(&std::fs::read_to_string(name_or_path)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Tolerances;
    use crate::realization::build_cloud;
    use crate::validators::*;

    #[test]
    fn all_fixtures_build_and_intertwine() {
        let tol = Tolerances::default();
        for n in NAMES {
            let a = by_name(n).unwrap();
            let v = check_intertwining(&a, 8, 0, &tol);
            assert!(v.passed(), "{n}: {v}");
        }
    }

    #[test]
    fn ex_change_is_tame_and_additive() {
        let tol = Tolerances::default();
        let a = ex_change();
        assert!(check_additivity(&a).passed());
        let v = check_index_condition(&a, 20, 0, &tol);
        assert!(v.passed(), "{v}");
        let t = check_tameness(&a, 12, 0, &tol);
        assert!(t.passed(), "{t}");
        assert!(check_metric_admissibility(&a, 12, 0, &tol).passed());
    }

    #[test]
    fn cube_is_tame_and_strong() {
        let tol = Tolerances::default();
        for b in [false, true] {
            let a = cube(b);
            let t = check_tameness(&a, 6, 1, &tol);
            assert!(t.passed(), "{t}");
            let s = check_cocycle(&a, CocycleLevel::Strong, 6, 2, &tol);
            assert!(s.passed(), "{s}");
        }
    }

    #[test]
    fn nonlin_witness_lives_in_chart_three() {
        let tol = Tolerances::default();
        let a = ex_nonlin();
        let c = build_cloud(&a, 12, 0, tol.tau_id).unwrap();
        let v = check_injectivity_hausdorff(&a, &c, &tol);
        assert!(v.failed());
        assert!(v.witnesses.iter().any(|w| w.charts == vec![vec![3]]), "{v}");
        assert!(check_additivity(&a).failed());
        let b = ex_nonlin_additive();
        assert!(check_additivity(&b).passed());
        assert!(check_cocycle(&b, CocycleLevel::Weak, 8, 0, &tol).passed());
        let cb = build_cloud(&b, 12, 0, tol.tau_id).unwrap();
        let vb = check_injectivity_hausdorff(&b, &cb, &tol);
        assert!(vb.witnesses.iter().any(|w| w.charts == vec![vec![3, 4]]), "{vb}");
    }

    #[test]
    fn ku30_filtration_without_additivity() {
        let a = ku30_nonadditive();
        assert!(check_additivity(&a).failed());
        assert!(check_filtration(&a).passed());
    }
}
