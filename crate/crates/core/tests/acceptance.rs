//! Acceptance run at desk scale: one line per criterion, full reports under
//! the target tmp dir. Pass criterion numbers as arguments to run a subset.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hadamard_core::config::{Preset, RunConfig};
use hadamard_core::parametrix::ParametrixBundle;
use hadamard_core::report::Report;
use hadamard_core::states::Frame;
use hadamard_core::suites;
use hadamard_core::Result;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Result<Report>,
}

fn bundle(cfg: &RunConfig) -> Result<ParametrixBundle> {
    ParametrixBundle::build(&cfg.model()?, &cfg.parametrix_options())
}

fn report(name: &str, rows: Result<Vec<hadamard_core::report::Row>>) -> Result<Report> {
    let mut r = Report::new(name);
    r.extend(rows?);
    Ok(r)
}

fn breathing() -> RunConfig {
    RunConfig::preset(Preset::BreathingMetric)
}

fn exact() -> Result<Report> {
    let cfg = breathing();
    report("exact_identities", suites::exact_identities(&cfg, &bundle(&cfg)?))
}

fn smoothing() -> Result<Report> {
    let cfg = breathing();
    report("smoothing_residuals", suites::smoothing_residuals(&cfg, &bundle(&cfg)?))
}

fn oracle() -> Result<Report> {
    let cfg = breathing();
    let cmp = suites::compare_with_oracle(&cfg, &cfg.model()?, &[4, 6, 8])?;
    for (i, nt) in cmp.truncations.iter().enumerate() {
        let worst: Vec<String> = (0..cmp.bands.len()).map(|k| format!("K{}={:.2e}", cmp.bands[k], cmp.worst(i, k))).collect();
        println!("    N={nt} slope {:.2} {}", cmp.slopes[i], worst.join(" "));
    }
    report("oracle", Ok(suites::oracle_rows(&cmp, "")))
}

fn static_check() -> Result<Report> {
    let cfg = RunConfig::preset(Preset::StaticMassive);
    report("static", suites::static_cross_check(&cfg, &bundle(&cfg)?))
}

fn splitting() -> Result<Report> {
    let cfg = breathing();
    report("splitting", suites::splitting(&cfg, &bundle(&cfg)?))
}

fn states() -> Result<Report> {
    let cfg = breathing();
    report("state_families", suites::state_families(&cfg, &Frame::new(bundle(&cfg)?.r())?))
}

fn gluing() -> Result<Report> {
    let cfg = breathing();
    report("gluing", suites::gluing(&cfg, &Frame::new(bundle(&cfg)?.r())?))
}

fn geometry() -> Result<Report> {
    let cfg = breathing();
    report("geometry", suites::geometry(&cfg, &cfg.model()?))
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, name: "exact identities", budget: Duration::from_secs(30), run: exact },
    Criterion { id: 2, name: "smoothing residuals", budget: Duration::from_secs(60), run: smoothing },
    Criterion { id: 3, name: "parametrix vs oracle", budget: Duration::from_secs(180), run: oracle },
    Criterion { id: 4, name: "static cross-check", budget: Duration::from_secs(30), run: static_check },
    Criterion { id: 5, name: "splitting and frequency sign", budget: Duration::from_secs(120), run: splitting },
    Criterion { id: 6, name: "state family positivity and purity", budget: Duration::from_secs(60), run: states },
    Criterion { id: 7, name: "two-chart gluing", budget: Duration::from_secs(60), run: gluing },
    Criterion { id: 8, name: "flow, Egorov and factorization", budget: Duration::from_secs(60), run: geometry },
];

fn main() -> ExitCode {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let mut failed = 0;
    for c in CRITERIA.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let start = Instant::now();
        let res = (c.run)();
        let took = start.elapsed();
        let (ok, detail, rep) = match res {
            Ok(rep) => {
                let passed = rep.rows.iter().filter(|r| r.pass).count();
                (rep.all_pass() && !rep.rows.is_empty(), format!("{passed}/{} checks", rep.rows.len()), Some(rep))
            }
            Err(e) => (false, format!("error: {e}"), None),
        };
        let in_time = took <= c.budget;
        let pass = ok && in_time;
        println!(
            "criterion {} {:<36} {}  {detail}, {:.1} s (budget {} s{})",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            c.budget.as_secs(),
            if in_time { "" } else { ", exceeded" }
        );
        if let Some(rep) = rep {
            for r in rep.failures() {
                let v = r.value.map_or("null".to_string(), |v| format!("{v:.4e}"));
                println!("    failed {}: {v} {} {:e}", r.check_id, r.relation.symbol(), r.threshold);
            }
            let _ = std::fs::create_dir_all(&out);
            let _ = rep.write(&out, &format!("criterion_{}", c.id));
        }
        if !pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} of {} criteria failed", CRITERIA.len());
        ExitCode::FAILURE
    } else {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    }
}
