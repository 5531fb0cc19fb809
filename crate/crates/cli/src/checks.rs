//! The individual checks, each producing one [`Record`].

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use locfloer::cz::{cz_index, crossing_form_index, det_sign_fixedless, determinant_identity_check, iterated_sign, parity_sign, CrossingOptions};
use locfloer::degree::{gradient_degree, lefschetz_index, DegreeOptions};
use locfloer::equivariant::{
    calibrate_shift, chain_level_supertrace, germ_generating_function, smith_check, smith_tower, supertrace_check, Calibration,
    CalibrationOptions, SmithOptions, SmithReport, SupertraceOptions,
};
use locfloer::exact::{is_integer, rat};
use locfloer::field::{Polynomial, ScalarField, SharedField};
use locfloer::genfunc::{dold_restriction_defect, invariance_defect, restrict_to_fixed, ComplementRecipe};
use locfloer::germ::{commutation_defect, dold_product};
use locfloer::group::GroupAction;
use locfloer::linalg::{self, block_diagonal, rotation, Mat};
use locfloer::morse::{refine_until_stable, RefineOptions};
use locfloer::symplectic::{iterate_path, make_block_path, BlockSpec, SymplecticPath, Tolerances};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{path_from, NamedField, NamedGerm, SuiteConfig};

/// Tolerances of the twisted-product pipeline.
pub const COMMUTATION_TOL: f64 = 1e-12;
pub const INVARIANCE_TOL: f64 = 1e-9;
pub const RESTRICTION_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct Record {
    pub check: String,
    pub name: String,
    pub inputs: Value,
    pub outputs: Value,
    pub verdict: bool,
    pub error: Option<String>,
    pub wall_time_ms: u64,
    /// Row of the per-check CSV table.
    #[serde(skip)]
    pub row: Vec<(String, String)>,
}

/// What a check body reports: outputs, verdict and CSV cells.
pub struct Outcome {
    pub outputs: Value,
    pub verdict: bool,
    pub row: Vec<(String, String)>,
}

fn cells(pairs: &[(&str, String)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn pass(v: bool) -> String {
    if v { "pass" } else { "fail" }.into()
}

/// Runs `body`, timing it; errors become failing records.
pub fn timed(check: &str, name: &str, inputs: Value, body: impl FnOnce() -> Result<Outcome, String>) -> Record {
    let start = Instant::now();
    let result = body();
    let wall_time_ms = start.elapsed().as_millis() as u64;
    match result {
        Ok(o) => Record { check: check.into(), name: name.into(), inputs, outputs: o.outputs, verdict: o.verdict, error: None, wall_time_ms, row: o.row },
        Err(e) => Record {
            check: check.into(),
            name: name.into(),
            inputs,
            outputs: Value::Null,
            verdict: false,
            error: Some(e.clone()),
            wall_time_ms,
            row: cells(&[("name", name.into()), ("verdict", "fail".into()), ("error", e)]),
        },
    }
}

pub type Task = Box<dyn FnOnce() -> Record + Send>;

/// Everything a check needs, resolved from the configuration.
#[derive(Clone)]
pub struct Context {
    pub config: SuiteConfig,
    pub seed: u64,
    /// Coefficient fields for homology: the rationals (0) and the primes.
    pub fields_p: Vec<u32>,
    pub fields: Vec<NamedField>,
    pub germs: Vec<NamedGerm>,
    pub family: Option<String>,
    pub only_p: Option<u32>,
}

impl Context {
    fn wanted(&self, name: &str) -> bool {
        self.family.as_deref().map_or(true, |f| f == name)
    }

    fn keep_p(&self, p: u32) -> bool {
        self.only_p.map_or(true, |q| q == p)
    }

    fn degree_opts(&self) -> DegreeOptions {
        DegreeOptions { seed: self.seed, repetitions: 2, ..Default::default() }
    }

    fn refine(&self) -> RefineOptions {
        let mut r = RefineOptions::default();
        if let Some(d) = self.config.homology.max_doublings {
            r.max_doublings = d;
        }
        r
    }

    fn recipe(&self) -> ComplementRecipe {
        self.config.recipe().expect("validated")
    }

    fn smith_options(&self) -> SmithOptions {
        SmithOptions { epsilon: self.config.epsilon(), r0: self.config.homology.r0, fixed_r0: None, chart: true, refine: self.refine() }
    }

    fn germ(&self, name: &str) -> &NamedGerm {
        self.germs.iter().find(|g| g.name == name).expect("validated")
    }
}

fn tol() -> Tolerances {
    Tolerances::default()
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// A planar block whose iterates up to `k_max` have no eigenvalue 1.
pub fn random_block(rng: &mut ChaCha8Rng, k_max: u32) -> BlockSpec {
    match rng.gen_range(0..3) {
        0 => loop {
            let den = rng.gen_range(2..=12i64);
            let q = rat(rng.gen_range(-3 * den..=3 * den), den);
            if (1..=k_max as i64).all(|k| !is_integer(&(&q * rat(k, 1)))) {
                return BlockSpec::rotation(q);
            }
        },
        kind => {
            let den = rng.gen_range(1..=4i64);
            let lambda = rat(rng.gen_range(den + 1..=4 * den), den);
            if kind == 1 {
                BlockSpec::positive_hyperbolic(lambda).expect("lambda > 1")
            } else {
                BlockSpec::negative_hyperbolic(lambda).expect("lambda > 1")
            }
        }
    }
}

pub fn random_path(rng: &mut ChaCha8Rng, max_blocks: usize, k_max: u32) -> SymplecticPath {
    let n = rng.gen_range(1..=max_blocks);
    make_block_path((0..n).map(|_| random_block(rng, k_max)).collect()).expect("nonempty")
}

fn describe(path: &SymplecticPath) -> String {
    path.blocks().map(|b| b.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("+")).unwrap_or_default()
}

pub fn cz_tasks(ctx: &Context) -> Vec<Task> {
    let mut tasks: Vec<Task> = Vec::new();
    let cz = &ctx.config.cz;
    for decl in cz.paths.iter().filter(|p| ctx.wanted(&p.name)) {
        let specs = path_from(&decl.name, &decl.blocks).ok().and_then(|p| p.blocks().map(|b| b.to_vec())).unwrap_or_default();
        let owned = decl.clone();
        tasks.push(Box::new(move || {
            let decl = owned;
            timed("cz", &decl.name, json!({ "blocks": decl.blocks }), || {
                let path = path_from(&decl.name, &decl.blocks).map_err(err)?;
                let closed = cz_index(&path, &tol()).map_err(err)?.index;
                let crossing = crossing_form_index(&path, &CrossingOptions::default()).map_err(err)?;
                let det = determinant_identity_check(&path, &tol()).map_err(err)?;
                let verdict = closed == crossing.index && det.equal;
                Ok(Outcome {
                    outputs: json!({ "closed_form": closed, "crossing_form": crossing.index, "crossings": crossing.crossings.len(),
                        "det_sign": det.lhs, "expected_sign": det.rhs }),
                    verdict,
                    row: cells(&[
                        ("name", decl.name.clone()),
                        ("blocks", decl.blocks.join("+")),
                        ("closed_form", closed.to_string()),
                        ("crossing_form", crossing.index.to_string()),
                        ("det_sign", det.lhs.to_string()),
                        ("expected_sign", det.rhs.to_string()),
                        ("verdict", pass(verdict)),
                    ]),
                })
            })
        }));
        // Only iterates that stay nondegenerate carry an index.
        for &k in cz.iterates.iter().filter(|&&k| specs.iter().all(|b| b.closed_form_cz(k).is_some())) {
            let decl = decl.clone();
            tasks.push(Box::new(move || iterated_sign_record(&decl.name, &decl.blocks, k)));
        }
    }
    if ctx.family.is_some() {
        return tasks;
    }
    if cz.random_paths > 0 {
        let (count, max_blocks, seed) = (cz.random_paths, cz.max_blocks, ctx.seed);
        tasks.push(Box::new(move || {
            timed("determinant-identity", "random-block-sums", json!({ "count": count, "max_blocks": max_blocks, "seed": seed }), || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut failures = Vec::new();
                for _ in 0..count {
                    let path = random_path(&mut rng, max_blocks, 1);
                    let r = determinant_identity_check(&path, &tol()).map_err(err)?;
                    if !r.equal {
                        failures.push(describe(&path));
                    }
                }
                let verdict = failures.is_empty();
                Ok(Outcome {
                    outputs: json!({ "checked": count, "failures": failures }),
                    verdict,
                    row: cells(&[("name", "random-block-sums".into()), ("checked", count.to_string()), ("failures", failures.len().to_string()), ("verdict", pass(verdict))]),
                })
            })
        }));
    }
    if cz.chain_multisets > 0 {
        let (count, max_blocks, k_max, seed) = (cz.chain_multisets, cz.chain_max_blocks, cz.chain_max_k, ctx.seed);
        tasks.push(Box::new(move || {
            let inputs = json!({ "count": count, "max_blocks": max_blocks, "max_k": k_max, "seed": seed });
            timed("chain-level", "random-orbit-multisets", inputs, || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc4a1);
                let mut failures = Vec::new();
                for case in 0..count {
                    let size = rng.gen_range(1..=4);
                    let orbits: Vec<(SymplecticPath, i64)> =
                        (0..size).map(|_| (random_path(&mut rng, max_blocks, k_max), rng.gen_range(-3..=3))).collect();
                    let k = rng.gen_range(1..=k_max);
                    let r = chain_level_supertrace(&orbits, k, &tol()).map_err(err)?;
                    if !r.verdict {
                        failures.push(json!({ "case": case, "k": k, "lhs": r.lhs, "rhs": r.rhs, "chi": r.chi }));
                    }
                }
                let verdict = failures.is_empty();
                Ok(Outcome {
                    outputs: json!({ "checked": count, "failures": failures }),
                    verdict,
                    row: cells(&[("name", "random-orbit-multisets".into()), ("checked", count.to_string()), ("failures", failures.len().to_string()), ("verdict", pass(verdict))]),
                })
            })
        }));
    }
    if cz.fixedless_max_order >= 2 && cz.fixedless_max_dim >= 1 {
        let (max_order, max_dim) = (cz.fixedless_max_order, cz.fixedless_max_dim);
        tasks.push(Box::new(move || {
            timed("fixedless", "fixed-point-free-sums", json!({ "max_order": max_order, "max_dim": max_dim }), || fixedless(max_order, max_dim))
        }));
    }
    tasks
}

/// `(-1)^(mu - mu_k)` three ways: the sign rule, per-block closed forms, and
/// `sign det(Phi - I) sign det(Phi^k - I)`.
fn iterated_sign_record(name: &str, blocks: &[String], k: u32) -> Record {
    let label = format!("{name}^{k}");
    timed("iterated-sign", &label, json!({ "blocks": blocks, "k": k }), || {
        let path = path_from(name, blocks).map_err(err)?;
        let specs = path.blocks().expect("block path").to_vec();
        let mut closed = 0i64;
        for b in &specs {
            match (b.closed_form_cz(1), b.closed_form_cz(k)) {
                (Some(m1), Some(mk)) => closed += m1 - mk,
                _ => return Err(format!("iterate {k} of {b} is degenerate")),
            }
        }
        let closed = parity_sign(closed);
        let sign = iterated_sign(&path, k, &tol()).map_err(err)?;
        let dets = path.endpoint_nondegeneracy(&tol()).sign() * iterate_path(&path, k).endpoint_nondegeneracy(&tol()).sign();
        let verdict = sign == closed && sign == dets;
        Ok(Outcome {
            outputs: json!({ "sign": sign, "closed_form": closed, "determinants": dets }),
            verdict,
            row: cells(&[
                ("name", label.clone()),
                ("k", k.to_string()),
                ("sign", sign.to_string()),
                ("closed_form", closed.to_string()),
                ("determinants", dets.to_string()),
                ("verdict", pass(verdict)),
            ]),
        })
    })
}

/// Every fixed-point-free sum of planar rotations of order dividing `k` and
/// sign flips, plus the cyclic shift on the normal space of the multidiagonal.
fn fixedless(max_order: usize, max_dim: usize) -> Result<Outcome, String> {
    let mut checked = 0usize;
    let mut failures = Vec::new();
    for k in 2..=max_order {
        // Block types: rotations by 2 pi j / k, and -1 when k is even.
        let mut types: Vec<Mat> = (1..k).map(|j| rotation(std::f64::consts::TAU * j as f64 / k as f64)).collect();
        if k % 2 == 0 {
            types.push(-Mat::identity(1, 1));
        }
        let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, Vec::new(), 0)];
        while let Some((start, chosen, dim)) = stack.pop() {
            if !chosen.is_empty() {
                let g = block_diagonal(&chosen.iter().map(|&t| types[t].clone()).collect::<Vec<_>>());
                let flips = chosen.iter().filter(|&&t| types[t].nrows() == 1).count();
                let r = det_sign_fixedless(&g, k).map_err(err)?;
                checked += 1;
                if !r.equal || r.det_sign != parity_sign(flips as i64) {
                    failures.push(json!({ "order": k, "blocks": chosen }));
                }
            }
            for t in start..types.len() {
                let d = dim + types[t].nrows();
                if d <= max_dim {
                    let mut next = chosen.clone();
                    next.push(t);
                    stack.push((t, next, d));
                }
            }
        }
        for block in 1..=2usize {
            if block * (k - 1) > max_dim {
                continue;
            }
            let g = GroupAction::block_shift(block, k);
            let fixed = g.fixed_basis();
            let normal = linalg::kernel_basis(&fixed.transpose(), 1e-10);
            let restricted = normal.transpose() * g.generator() * &normal;
            let r = det_sign_fixedless(&restricted, k).map_err(err)?;
            checked += 1;
            if !r.equal {
                failures.push(json!({ "order": k, "normal_of_shift": block }));
            }
        }
    }
    let verdict = failures.is_empty();
    Ok(Outcome {
        outputs: json!({ "checked": checked, "failures": failures }),
        verdict,
        row: cells(&[("name", "fixed-point-free-sums".into()), ("checked", checked.to_string()), ("failures", failures.len().to_string()), ("verdict", pass(verdict))]),
    })
}

fn chi_of(betti: &[usize]) -> i64 {
    betti.iter().enumerate().map(|(i, &b)| parity_sign(i as i64) as i64 * b as i64).sum()
}

pub fn degree_tasks(ctx: &Context) -> Vec<Task> {
    let mut tasks: Vec<Task> = Vec::new();
    for f in ctx.fields.iter().filter(|f| ctx.wanted(&f.name)).cloned() {
        let opts = ctx.degree_opts();
        tasks.push(Box::new(move || {
            timed("degree", &f.name, json!({ "dim": f.field.dim() }), || {
                let r = gradient_degree(&f.field, &opts).map_err(err)?;
                let expected = f.expect_betti.as_deref().map(chi_of);
                let verdict = expected.map_or(true, |c| c == r.degree);
                Ok(Outcome {
                    outputs: json!({ "degree": r.degree, "roots": r.roots_found.len(), "expected_chi": expected, "margin": r.margin }),
                    verdict,
                    row: cells(&[
                        ("name", f.name.clone()),
                        ("degree", r.degree.to_string()),
                        ("roots", r.roots_found.len().to_string()),
                        ("expected_chi", expected.map(|c| c.to_string()).unwrap_or_default()),
                        ("verdict", pass(verdict)),
                    ]),
                })
            })
        }));
    }
    for g in ctx.germs.iter().filter(|g| ctx.wanted(&g.name)).cloned() {
        let opts = ctx.degree_opts();
        tasks.push(Box::new(move || {
            timed("lefschetz", &g.name, json!({ "dim": g.germ.dim() }), || {
                let r = lefschetz_index(&g.germ, None, &opts).map_err(err)?;
                let m = g.germ.dim();
                let linear = linalg::sign(linalg::det(&(g.germ.linearization() - Mat::identity(m, m)))) as i64;
                let verdict = r.degree == linear;
                Ok(Outcome {
                    outputs: json!({ "index": r.degree, "fixed_points": r.roots_found.len(), "linearized": linear }),
                    verdict,
                    row: cells(&[
                        ("name", g.name.clone()),
                        ("index", r.degree.to_string()),
                        ("linearized", linear.to_string()),
                        ("verdict", pass(verdict)),
                    ]),
                })
            })
        }));
    }
    tasks
}

pub fn genfunc_tasks(ctx: &Context) -> Vec<Task> {
    let mut tasks: Vec<Task> = Vec::new();
    let periods: BTreeSet<u32> = ctx.config.dold_periods.iter().copied().filter(|&p| ctx.keep_p(p)).collect();
    for g in ctx.germs.iter().filter(|g| ctx.wanted(&g.name)) {
        for &p in &periods {
            let (g, recipe, seed) = (g.clone(), ctx.recipe(), ctx.seed);
            let name = format!("{}/dold-{p}", g.name);
            tasks.push(Box::new(move || {
                timed("genfunc", &name, json!({ "germ": g.name, "p": p }), || {
                    let (product, action) = dold_product(&g.germ, p as usize).map_err(err)?;
                    let commutation = commutation_defect(&product, &action, 200, seed);
                    let (f, report) = germ_generating_function(&product, Some(&action), recipe).map_err(err)?;
                    let invariance = invariance_defect(f.as_ref(), &action, 200, seed);
                    let fixed = restrict_to_fixed(f.clone(), &action).map_err(err)?;
                    let (inner, _) = germ_generating_function(&g.germ, None, recipe).map_err(err)?;
                    let restriction = dold_restriction_defect(&fixed, inner.as_ref(), p as usize, 200, seed);
                    let verdict = commutation <= COMMUTATION_TOL && invariance <= INVARIANCE_TOL && restriction <= RESTRICTION_TOL;
                    Ok(Outcome {
                        outputs: json!({ "commutation_defect": commutation, "invariance_defect": invariance, "restriction_defect": restriction,
                            "closedness_defect": report.closedness_defect, "radius": report.radius, "quadratic": report.quadratic }),
                        verdict,
                        row: cells(&[
                            ("germ", g.name.clone()),
                            ("p", p.to_string()),
                            ("commutation_defect", format!("{commutation:.3e}")),
                            ("invariance_defect", format!("{invariance:.3e}")),
                            ("restriction_defect", format!("{restriction:.3e}")),
                            ("verdict", pass(verdict)),
                        ]),
                    })
                })
            }));
        }
    }
    tasks
}

pub fn homology_tasks(ctx: &Context) -> Vec<Task> {
    let mut tasks: Vec<Task> = Vec::new();
    let ps: Vec<u32> = ctx.fields_p.iter().copied().filter(|&p| ctx.keep_p(p)).collect();
    let (epsilon, r0) = (ctx.config.epsilon(), ctx.config.homology.r0);
    for f in ctx.fields.iter().filter(|f| ctx.wanted(&f.name)) {
        for &p in &ps {
            let (f, refine, opts) = (f.clone(), ctx.refine(), ctx.degree_opts());
            tasks.push(Box::new(move || {
                let name = format!("{}/p={p}", f.name);
                timed("homology", &name, json!({ "field": f.name, "p": p }), || {
                    let r0 = r0.unwrap_or_else(|| locfloer::equivariant::default_r0(f.field.dim()));
                    let h = refine_until_stable(&f.field, epsilon, p, r0, &refine).map_err(err)?;
                    let degree = gradient_degree(&f.field, &opts).map_err(err)?.degree;
                    let matches = f.expect_betti.as_ref().map_or(true, |b| *b == h.dims.betti);
                    let verdict = matches && h.dims.chi == degree;
                    Ok(Outcome {
                        outputs: json!({ "betti": h.dims.betti, "chi": h.dims.chi, "degree": degree, "resolution": h.resolution,
                            "epsilon": h.epsilon, "expected_betti": f.expect_betti }),
                        verdict,
                        row: cells(&[
                            ("field", f.name.clone()),
                            ("p", p.to_string()),
                            ("betti", format!("{:?}", h.dims.betti)),
                            ("chi", h.dims.chi.to_string()),
                            ("degree", degree.to_string()),
                            ("resolution", h.resolution.to_string()),
                            ("verdict", pass(verdict)),
                        ]),
                    })
                })
            }));
        }
    }
    if ctx.family.is_some() {
        return tasks;
    }
    for m in 1..=ctx.config.homology.normalization_max_dim {
        for mask in 0..(1u32 << m) {
            let signs: Vec<i32> = (0..m).map(|i| if mask >> i & 1 == 1 { -1 } else { 1 }).collect();
            let index = signs.iter().filter(|&&s| s < 0).count();
            for &p in &ps {
                let (signs, refine) = (signs.clone(), ctx.refine());
                let label: String = signs.iter().map(|&s| if s > 0 { '+' } else { '-' }).collect();
                tasks.push(Box::new(move || {
                    let name = format!("quadratic[{label}]/p={p}");
                    timed("normalization", &name, json!({ "signs": signs, "p": p }), || {
                        let f = Polynomial::quadratic(&signs);
                        let h = refine_until_stable(&f, epsilon, p, locfloer::equivariant::default_r0(m), &refine).map_err(err)?;
                        let mut expected = vec![0; m + 1];
                        expected[index] = 1;
                        let verdict = h.dims.betti == expected;
                        Ok(Outcome {
                            outputs: json!({ "betti": h.dims.betti, "index": index, "resolution": h.resolution }),
                            verdict,
                            row: cells(&[
                                ("signs", label.clone()),
                                ("p", p.to_string()),
                                ("index", index.to_string()),
                                ("betti", format!("{:?}", h.dims.betti)),
                                ("verdict", pass(verdict)),
                            ]),
                        })
                    })
                }));
            }
        }
    }
    tasks
}

fn smith_outcome(family: &str, group: &str, p: u32, r: &SmithReport) -> Outcome {
    let relation = if r.strict { "strict" } else { "equal" };
    Outcome {
        outputs: json!({ "fixed_betti": r.fixed.dims.betti, "full_betti": r.full.dims.betti, "fixed_total": r.fixed.dims.total_dim,
            "full_total": r.full.dims.total_dim, "fixed_dim": r.fixed_dim, "group_order": r.group_order, "strict": r.strict }),
        verdict: r.verdict,
        row: cells(&[
            ("family", family.into()),
            ("group", group.into()),
            ("p", p.to_string()),
            ("fixed_total", r.fixed.dims.total_dim.to_string()),
            ("full_total", r.full.dims.total_dim.to_string()),
            ("relation", if r.verdict { relation.into() } else { "violated".into() }),
            ("verdict", pass(r.verdict)),
        ]),
    }
}

pub fn smith_tasks(ctx: &Context) -> Vec<Task> {
    let mut tasks: Vec<Task> = Vec::new();
    for decl in &ctx.config.smith {
        let family = decl.field.clone().or(decl.germ.clone()).expect("validated");
        if !ctx.wanted(&family) {
            continue;
        }
        for &p in decl.p.iter().filter(|&&p| ctx.keep_p(p)) {
            let opts = ctx.smith_options();
            let name = format!("{family}/{}/p={p}", decl.action);
            let inputs = json!({ "family": family, "action": decl.action, "p": p });
            if let Some(axis) = decl.action.strip_prefix("reflection:") {
                let axis: usize = axis.parse().expect("validated");
                let f = ctx.fields.iter().find(|f| f.name == family).expect("validated").clone();
                let group = decl.action.clone();
                tasks.push(Box::new(move || {
                    timed("smith", &name, inputs, || {
                        if axis >= f.field.dim() {
                            return Err(format!("axis {axis} out of range for dimension {}", f.field.dim()));
                        }
                        let g = GroupAction::reflection(f.field.dim(), axis);
                        let shared: SharedField = Arc::new(f.field.clone());
                        let r = smith_check(shared, &g, p, &opts).map_err(err)?;
                        Ok(smith_outcome(&f.name, &group, p, &r))
                    })
                }));
            } else {
                let (g, recipe) = (ctx.germ(&family).clone(), ctx.recipe());
                tasks.push(Box::new(move || {
                    timed("smith", &name, inputs, || {
                        let (product, action) = dold_product(&g.germ, p as usize).map_err(err)?;
                        let (f, _) = germ_generating_function(&product, Some(&action), recipe).map_err(err)?;
                        let r = smith_check(f, &action, p, &opts).map_err(err)?;
                        Ok(smith_outcome(&g.name, "dold", p, &r))
                    })
                }));
            }
        }
    }
    for decl in ctx.config.tower.iter().filter(|t| ctx.wanted(&t.germ) && ctx.keep_p(t.p)) {
        let (decl, g, recipe, opts) = (decl.clone(), ctx.germ(&decl.germ).clone(), ctx.recipe(), ctx.smith_options());
        tasks.push(Box::new(move || {
            let name = format!("{}/p={}/levels={}", decl.germ, decl.p, decl.levels);
            timed("tower", &name, json!({ "germ": decl.germ, "p": decl.p, "levels": decl.levels }), || {
                let r = smith_tower(&g.germ, decl.p, decl.levels, recipe, &opts).map_err(err)?;
                Ok(Outcome {
                    outputs: serde_json::to_value(&r).map_err(err)?,
                    verdict: r.verdict,
                    row: cells(&[
                        ("germ", decl.germ.clone()),
                        ("p", decl.p.to_string()),
                        ("chain", format!("{:?}", r.chain)),
                        ("verdict", pass(r.verdict)),
                    ]),
                })
            })
        }));
    }
    tasks
}

/// Half dimensions the supertrace checks will look up.
pub fn calibration_dims(ctx: &Context) -> Vec<usize> {
    let dims: BTreeSet<usize> =
        ctx.config.supertrace.iter().filter(|s| ctx.wanted(&s.germ)).map(|s| ctx.germ(&s.germ).germ.dim_half()).collect();
    dims.into_iter().collect()
}

pub fn calibrate(ctx: &Context, dims: &[usize]) -> (Record, Option<Calibration>) {
    let opts = CalibrationOptions { recipe: ctx.recipe(), turns: ctx.config.turns(), seed: ctx.seed, chart: true, refine: ctx.refine() };
    let mut calibration = None;
    let record = timed("calibration", "rotation-vs-hyperbolic", json!({ "dims_half": dims, "turns": ctx.config.calibration.turns }), || {
        let c = calibrate_shift(dims, &opts).map_err(err)?;
        let outputs = serde_json::to_value(&c).map_err(err)?;
        let row = c
            .entries
            .iter()
            .map(|e| format!("n={}: s={} sigma={} hyperbolic s={}", e.dim_half, e.shift, e.sigma, e.hyperbolic_shift))
            .collect::<Vec<_>>()
            .join("; ");
        calibration = Some(c);
        Ok(Outcome { outputs, verdict: true, row: cells(&[("name", "rotation-vs-hyperbolic".into()), ("entries", row), ("verdict", pass(true))]) })
    });
    (record, calibration)
}

pub fn supertrace_tasks(ctx: &Context, calibration: Option<&Calibration>) -> Vec<Task> {
    let mut tasks: Vec<Task> = Vec::new();
    for decl in ctx.config.supertrace.iter().filter(|s| ctx.wanted(&s.germ)) {
        for &p in decl.p.iter().filter(|&&p| ctx.keep_p(p)) {
            let (decl, g, calibration) = (decl.clone(), ctx.germ(&decl.germ).clone(), calibration.cloned());
            let opts = SupertraceOptions {
                recipe: ctx.recipe(),
                r0: ctx.config.homology.r0,
                epsilon: ctx.config.epsilon(),
                seed: ctx.seed,
                chart: true,
                refine: ctx.refine(),
            };
            tasks.push(Box::new(move || {
                let name = format!("{}/k={}/p={p}", decl.germ, decl.k);
                timed("supertrace", &name, json!({ "germ": decl.germ, "k": decl.k, "p": p }), || {
                    let r = supertrace_check(&g.germ, decl.k, p, calibration.as_ref(), &opts).map_err(err)?;
                    let comparison = r.modular.as_ref().unwrap_or(&r.rational).comparison.clone().expect("filled");
                    Ok(Outcome {
                        outputs: json!({
                            "lefschetz": r.lefschetz,
                            "sigma": r.sigma,
                            "expected": r.expected,
                            "morse_supertrace": r.rational.supertrace,
                            "chain_trace": r.rational.chain_trace,
                            "modular_supertrace": r.modular.as_ref().map(|m| m.supertrace),
                            "comparison": comparison,
                            "betti": r.homology.dims.betti,
                            "fixed_betti": r.rational.fixed_dims.as_ref().map(|d| d.betti.clone()),
                            "resolution": r.homology.resolution,
                        }),
                        verdict: r.verdict,
                        row: cells(&[
                            ("germ", decl.germ.clone()),
                            ("k", decl.k.to_string()),
                            ("p", p.to_string()),
                            ("lefschetz", r.lefschetz.to_string()),
                            ("expected", comparison.expected.to_string()),
                            ("observed", comparison.observed.to_string()),
                            ("betti", format!("{:?}", r.homology.dims.betti)),
                            ("verdict", pass(r.verdict)),
                        ]),
                    })
                })
            }));
        }
    }
    tasks
}
