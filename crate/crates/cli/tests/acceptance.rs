//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use elliptic_lab_cli::report::ResultRow;
use elliptic_lab_cli::{load_config, run_experiments, Experiment, Format, RunOptions, RunReport};

struct Outcome {
    id: usize,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn opts(out: &Path, threads: Option<usize>) -> RunOptions {
    RunOptions { config: None, out: Some(out.to_path_buf()), seed: Some(1), threads, format: Format::Csv }
}

fn criterion(row: &ResultRow) -> Option<&str> {
    row.check.as_ref().map(|c| c.criterion.as_str())
}

/// Checked rows whose criterion is in `names`, optionally restricted by case substring.
fn checked<'a>(rows: &'a [ResultRow], names: &[&str], case: Option<&str>) -> Vec<&'a ResultRow> {
    rows.iter()
        .filter(|r| criterion(r).is_some_and(|c| names.contains(&c)))
        .filter(|r| case.is_none_or(|c| r.case.contains(c)))
        .collect()
}

/// Passes when there is at least one row per listed criterion and every such row passes.
fn all_pass(rows: &[&ResultRow], names: &[&str]) -> (bool, String) {
    let mut detail = Vec::new();
    let mut ok = true;
    for n in names {
        let group: Vec<_> = rows.iter().filter(|r| criterion(r) == Some(*n)).collect();
        let failed = group.iter().filter(|r| r.pass != Some(true)).count();
        if group.is_empty() || failed > 0 {
            ok = false;
        }
        let worst = group
            .iter()
            .map(|r| r.value)
            .fold(None, |m: Option<(f64, f64)>, v| Some(m.map_or((v, v), |(a, b)| (a.min(v), b.max(v)))));
        match worst {
            Some((lo, hi)) => detail.push(format!("{n}: {} rows, {failed} failed, range [{lo:.3e}, {hi:.3e}]", group.len())),
            None => detail.push(format!("{n}: no rows")),
        }
    }
    (ok, detail.join("; "))
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "summary.json") {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn identical(a: &Path, b: &Path) -> (bool, String) {
    let (fa, fb) = (files(a), files(b));
    let csvs = fa.keys().filter(|k| k.extension().is_some_and(|e| e == "csv")).count();
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    (csvs > 0 && differing.is_empty(), format!("{} files ({csvs} csv), differing: {differing:?}", fa.len()))
}

fn criterion_1() -> Outcome {
    let mut cfg = load_config(None, Some(1)).unwrap();
    let spec = cfg.perturb.as_mut().unwrap();
    spec.epsilons = vec![0.05];
    spec.points = vec![[2.0, 0.5]];
    spec.lattice = None;
    assert!((spec.spacing - 1.0 / 32.0).abs() < 1e-15);
    let start = Instant::now();
    let out = Experiment::Perturb.run(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rows = checked(&out.rows, &["perturb.ratio_slack", "perturb.direct_match", "perturb.converged"], Some("eps=0.05"));
    let (ok, detail) = all_pass(&rows, &["perturb.ratio_slack", "perturb.direct_match", "perturb.converged"]);
    Outcome { id: 1, title: "perturbation series decay", pass: ok && secs < 30.0, detail: format!("{detail}; {secs:.1} s") }
}

fn from_run(rep: &RunReport) -> Vec<Outcome> {
    let rows = &rep.rows;
    let mut out = Vec::new();
    let mut push = |id, title, names: &[&str], case: Option<&str>, extra: Option<(bool, String)>| {
        let (mut ok, mut detail) = all_pass(&checked(rows, names, case), names);
        if let Some((e_ok, e_detail)) = extra {
            ok &= e_ok;
            detail = format!("{detail}; {e_detail}");
        }
        out.push(Outcome { id, title, pass: ok, detail });
    };

    let eps_cover = [2.0, 1.0].iter().all(|p| {
        [0.01, 0.02, 0.05, 0.1].iter().all(|e| {
            let case = format!("p={p} s=0.5 eps={e}");
            rows.iter().any(|r| r.case == case && criterion(r) == Some("perturb.c2_slack"))
        })
    });
    push(2, "C2 bound", &["perturb.c2_slack"], None, Some((eps_cover, format!("eps grid covered at p=2 and p=1: {eps_cover}"))));

    let perturb_secs = rep.summary.experiments.iter().find(|s| s.experiment == "perturb").map_or(f64::INFINITY, |s| s.runtime_seconds);
    let lattice_points = checked(rows, &["perturb_lattice.converged"], None).len();
    push(
        3,
        "neighborhood lattice",
        &["perturb_lattice.converged", "perturb_lattice.lambda_min"],
        None,
        Some((lattice_points == 25 && perturb_secs < 300.0, format!("{lattice_points} lattice points; perturb {perturb_secs:.1} s"))),
    );
    push(4, "duality", &["duality.pairing_tol", "norms.holder_max"], None, None);
    push(5, "norm identities", &["norms.l2_lower", "norms.l2_upper", "norms.depth_stability", "norms.quasi_max"], None, None);
    let finite = checked(rows, &["norms.embedding_max"], None).iter().all(|r| r.value.is_finite());
    push(6, "embedding and growth exponents", &["norms.embedding_max", "norms.slope_tol"], None, Some((finite, format!("finite: {finite}"))));
    push(7, "sequence interpolation", &["norms.sequence_max"], None, None);
    let garding: Vec<&str> = {
        let mut v: Vec<&str> = rows.iter().filter(|r| r.experiment == "garding").filter_map(criterion).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let bfs = garding.contains(&"garding.bfs_rate_min") && garding.contains(&"garding.monotone_violations");
    push(8, "biharmonic family", &garding, None, Some((bfs, format!("monotonicity and BFS rate present: {bfs}"))));
    push(9, "Newton potential", &["newton.inversion_tol", "newton.adjoint_tol", "newton.uniform_factor"], None, None);
    push(
        10,
        "Caccioppoli and Poincare",
        &["poincare.ratio_max", "poincare.stability_factor", "caccioppoli.ratio_max", "caccioppoli.stability_factor"],
        None,
        None,
    );
    out
}

#[test]
fn acceptance() {
    let mut outcomes = vec![criterion_1()];

    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let first = run_experiments(&Experiment::ALL, &opts(dirs[0].path(), Some(1))).unwrap();
    outcomes.extend(from_run(&first));
    run_experiments(&Experiment::ALL, &opts(dirs[1].path(), Some(1))).unwrap();
    run_experiments(&Experiment::ALL, &opts(dirs[2].path(), Some(4))).unwrap();
    let (same_run, d1) = identical(dirs[0].path(), dirs[1].path());
    let (same_threads, d2) = identical(dirs[0].path(), dirs[2].path());
    outcomes.push(Outcome {
        id: 11,
        title: "determinism",
        pass: same_run && same_threads,
        detail: format!("repeat: {d1}; threads 1 vs 4: {d2}"),
    });

    outcomes.sort_by_key(|o| o.id);
    // straight to stderr so the lines survive output capture
    let mut err = std::io::stderr().lock();
    for o in &outcomes {
        let status = if o.pass { "PASS" } else { "FAIL" };
        writeln!(err, "[{status}] criterion {:>2} {}: {}", o.id, o.title, o.detail).unwrap();
    }
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
