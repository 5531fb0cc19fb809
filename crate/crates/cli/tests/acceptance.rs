//! Acceptance criteria, one line each, evaluated on a run of the shipped
//! configuration.

use std::path::PathBuf;

use locfloer::cz::crossing_form_index;
use locfloer::cz::CrossingOptions;
use locfloer::exact::{floor_i64, rat};
use locfloer::symplectic::{make_block_path, BlockSpec};
use locfloer_cli::{execute, strip_timing, Cli, Command};
use serde_json::Value;

const COMMUTATION_TOL: f64 = 1e-12;
const INVARIANCE_TOL: f64 = 1e-9;
const RESTRICTION_TOL: f64 = 1e-8;

struct Criterion {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
    limit: f64,
}

fn suite(out: PathBuf) -> Value {
    let cli = Cli { command: Command::Suite, config: None, seed: None, out, p: None, family: None, jobs: Some(1) };
    let manifest = execute(&cli).expect("shipped configuration runs");
    serde_json::to_value(&manifest).unwrap()
}

fn records<'a>(m: &'a Value, check: &str) -> Vec<&'a Value> {
    m["records"].as_array().unwrap().iter().filter(|r| r["check"] == check).collect()
}

fn seconds(rs: &[&Value]) -> f64 {
    rs.iter().map(|r| r["wall_time_ms"].as_u64().unwrap()).sum::<u64>() as f64 / 1000.0
}

fn all_pass(rs: &[&Value]) -> bool {
    !rs.is_empty() && rs.iter().all(|r| r["verdict"] == true)
}

fn failures(r: &Value) -> usize {
    r["outputs"]["failures"].as_array().map_or(usize::MAX, |f| f.len())
}

fn checked(r: &Value) -> u64 {
    r["outputs"]["checked"].as_u64().unwrap_or(0)
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::INFINITY)
}

fn criterion(id: u32, title: &'static str, limit: f64, rs: &[&Value], pass: bool, detail: String) -> Criterion {
    let seconds = seconds(rs);
    Criterion { id, title, pass: pass && seconds < limit, detail, seconds, limit }
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let m = suite(dir.path().join("first"));
    let mut out = Vec::new();

    let rs = records(&m, "determinant-identity");
    let ok = rs.len() == 1 && checked(rs[0]) == 500 && failures(rs[0]) == 0 && rs[0]["inputs"]["max_blocks"] == 4;
    out.push(criterion(1, "determinant identity on random block sums", 10.0, &rs, ok, format!("{} paths, {} failures", checked(rs[0]), failures(rs[0]))));

    // Closed forms recomputed here: mu = 2 floor(theta) + 1 for rotations.
    let rs = records(&m, "cz");
    let mut table_ok = true;
    for (n, d) in [(1, 5), (-1, 5), (1, 3), (-1, 3), (4, 3), (7, 5)] {
        let theta = rat(n, d);
        let path = make_block_path(vec![BlockSpec::rotation(theta.clone())]).unwrap();
        let crossing = crossing_form_index(&path, &CrossingOptions::default()).unwrap().index;
        table_ok &= crossing == 2 * floor_i64(&theta) + 1;
    }
    let families: std::collections::BTreeSet<String> =
        rs.iter().flat_map(|r| r["inputs"]["blocks"].as_array().unwrap().iter().map(|b| b.as_str().unwrap().split(':').next().unwrap().to_string())).collect();
    let ok = all_pass(&rs) && table_ok && families.len() == 3;
    out.push(criterion(2, "crossing form matches closed forms", 5.0, &rs, ok, format!("{} paths over {:?}, rotation table {}", rs.len(), families, table_ok)));

    let rs = records(&m, "iterated-sign");
    let doubling = rs.iter().find(|r| r["name"] == "negative-hyperbolic-2^2").map(|r| r["outputs"]["sign"].as_i64().unwrap());
    let ok = rs.len() >= 50 && all_pass(&rs) && doubling == Some(-1);
    out.push(criterion(3, "iterated-orbit sign rule", 5.0, &rs, ok, format!("{} cases, negative hyperbolic doubling sign {:?}", rs.len(), doubling)));

    let rs = records(&m, "chain-level");
    let ok = rs.len() == 1 && checked(rs[0]) == 300 && failures(rs[0]) == 0;
    out.push(criterion(4, "chain-level supertrace identity", 30.0, &rs, ok, format!("{} multisets, {} failures", checked(rs[0]), failures(rs[0]))));

    let rs = records(&m, "fixedless");
    let ok = rs.len() == 1 && failures(rs[0]) == 0 && rs[0]["inputs"]["max_order"] == 8 && rs[0]["inputs"]["max_dim"] == 6;
    out.push(criterion(5, "determinant sign of fixed-point-free actions", 5.0, &rs, ok, format!("{} sums, {} failures", checked(rs[0]), failures(rs[0]))));

    let rs = records(&m, "normalization");
    let ps: std::collections::BTreeSet<u64> = rs.iter().map(|r| r["inputs"]["p"].as_u64().unwrap()).collect();
    let ok = rs.len() == 30 * 5 && all_pass(&rs) && ps.into_iter().collect::<Vec<_>>() == vec![0, 2, 3, 5, 7];
    out.push(criterion(6, "Morse normalization of quadratics", 120.0, &rs, ok, format!("{} signature/field pairs", rs.len())));

    let homology = records(&m, "homology");
    let monkey: Vec<&Value> = homology.iter().copied().filter(|r| r["inputs"]["field"] == "monkey-saddle").collect();
    let ok = !monkey.is_empty()
        && monkey.iter().all(|r| r["outputs"]["betti"] == serde_json::json!([0, 2, 0]) && r["outputs"]["chi"] == -2 && r["outputs"]["degree"] == -2);
    out.push(criterion(7, "monkey saddle homology and degree", 120.0, &monkey, ok, format!("{} fields of coefficients, betti (0, 2, 0)", monkey.len())));

    let fields: std::collections::BTreeSet<&str> = homology.iter().map(|r| r["inputs"]["field"].as_str().unwrap()).collect();
    let ok = fields.len() >= 10 && all_pass(&homology) && homology.iter().all(|r| r["outputs"]["chi"] == r["outputs"]["degree"]);
    out.push(criterion(8, "Euler characteristic equals gradient degree", 180.0, &homology, ok, format!("{} fields, {} computations", fields.len(), homology.len())));

    let rs = records(&m, "genfunc");
    let within = |r: &&Value| {
        let o = &r["outputs"];
        num(&o["commutation_defect"]) <= COMMUTATION_TOL && num(&o["invariance_defect"]) <= INVARIANCE_TOL && num(&o["restriction_defect"]) <= RESTRICTION_TOL
    };
    let nonlinear = rs.iter().any(|r| r["outputs"]["quadratic"] == false);
    let linear = rs.iter().any(|r| r["outputs"]["quadratic"] == true);
    let periods: std::collections::BTreeSet<u64> = rs.iter().map(|r| r["inputs"]["p"].as_u64().unwrap()).collect();
    let ok = all_pass(&rs) && rs.iter().all(within) && nonlinear && linear && periods.len() == 2;
    out.push(criterion(9, "twisted-product pipeline defects", 120.0, &rs, ok, format!("{} germ/period pairs", rs.len())));

    let rs = records(&m, "smith");
    let strict = rs.iter().any(|r| r["inputs"]["family"] == "monkey-saddle" && r["outputs"]["fixed_total"] == 0 && r["outputs"]["full_total"] == 2);
    let primes: std::collections::BTreeSet<u64> = rs.iter().map(|r| r["inputs"]["p"].as_u64().unwrap()).collect();
    let ok = all_pass(&rs) && strict && primes.contains(&2) && primes.contains(&3);
    out.push(criterion(10, "Smith inequality", 600.0, &rs, ok, format!("{} cases, strict monkey saddle {}", rs.len(), strict)));

    let mut rs = records(&m, "calibration");
    let consistent = rs.len() == 1 && rs[0]["verdict"] == true;
    let traces = records(&m, "supertrace");
    let covered = ["rotation", "hyperbolic", "twist"]
        .iter()
        .all(|g| [(2, 0), (2, 2), (3, 0), (3, 3)].iter().all(|&(k, p)| traces.iter().any(|r| r["inputs"]["germ"] == *g && r["inputs"]["k"] == k && r["inputs"]["p"] == p)));
    let ok = consistent && covered && all_pass(&traces);
    rs.extend(traces.iter().copied());
    out.push(criterion(11, "supertrace formula after calibration", 600.0, &rs, ok, format!("{} checks, calibration consistent {consistent}", traces.len())));

    let rs = records(&m, "tower");
    let chain_ok = rs.iter().all(|r| {
        let c: Vec<u64> = r["outputs"]["chain"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        c.len() >= 3 && c.windows(2).all(|w| w[0] <= w[1])
    });
    let ok = all_pass(&rs) && chain_ok && rs.iter().any(|r| r["inputs"]["germ"] == "rotation" && r["inputs"]["p"] == 2);
    out.push(criterion(12, "Smith tower over iterated twisted products", 300.0, &rs, ok, format!("chains {:?}", rs.iter().map(|r| r["outputs"]["chain"].to_string()).collect::<Vec<_>>())));

    let start = std::time::Instant::now();
    let again = suite(dir.path().join("second"));
    let read = |p: PathBuf| strip_timing(serde_json::from_str(&std::fs::read_to_string(p.join("manifest.json")).unwrap()).unwrap());
    let identical = read(dir.path().join("first")) == read(dir.path().join("second"));
    let ok = identical && strip_timing(again) == strip_timing(m.clone()) && m["summary"]["failed"] == 0;
    out.push(Criterion { id: 13, title: "repeated suite runs agree", pass: ok, detail: format!("manifests identical {identical}"), seconds: start.elapsed().as_secs_f64(), limit: f64::INFINITY });

    for c in &out {
        let limit = if c.limit.is_finite() { format!("{:.0} s", c.limit) } else { "none".into() };
        println!("criterion {:>2} {} {}: {} ({:.2} s, limit {limit})", c.id, if c.pass { "PASS" } else { "FAIL" }, c.title, c.detail, c.seconds);
    }
    let failed: Vec<u32> = out.iter().filter(|c| !c.pass).map(|c| c.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
