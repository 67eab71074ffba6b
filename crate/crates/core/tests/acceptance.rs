//! Acceptance suite: one [PASS]/[FAIL] line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use vlasov_yukawa::oracle::run_and_compare;
use vlasov_yukawa::picard::{run, RunConfig};
use vlasov_yukawa::verification::{self, CriterionResult, SuiteOutcome};

const SEED: u64 = 20;

fn report(r: &CriterionResult) -> bool {
    println!("{}", r.line());
    r.pass
}

fn suite(id: u8, name: &str, out: vlasov_yukawa::Result<SuiteOutcome>) -> CriterionResult {
    match out {
        Ok(o) => o.result,
        Err(e) => CriterionResult { id, name: name.into(), pass: false, detail: format!("error: {e}"), seconds: 0.0 },
    }
}

/// Criterion 6 on two fields: the desk free-streaming field and a stronger
/// one (amplitude ×100 over t ≤ 20), with both charge signs.
fn characteristics(cfg: &RunConfig) -> vlasov_yukawa::Result<CriterionResult> {
    let start = Instant::now();
    let (data, _) = cfg.initial_data()?;
    let desk = verification::free_streaming_field(cfg, &data, 6)?;
    let short = RunConfig { t_max: 20.0, ..cfg.clone() };
    let strong = verification::free_streaming_field(&short, &data.scaled(100.0), 6)?;
    let mut parts = vec![];
    let mut pass = true;
    for (label, field, q) in [("desk q=+1", &desk, 1.0), ("strong q=+1", &strong, 1.0), ("strong q=−1", &strong, -1.0)] {
        let o = verification::characteristics_suite(field, q, 20, SEED)?;
        pass &= o.result.pass;
        parts.push(format!("[{label}] {}", o.result.detail));
    }
    Ok(CriterionResult {
        id: 6,
        name: "characteristics and ladders".into(),
        pass,
        detail: parts.join(" "),
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn main() -> ExitCode {
    let cfg = RunConfig::desk();
    let mut ok = true;
    ok &= report(&suite(1, "Faà di Bruno coefficient bounds", verification::faa_di_bruno_suite()));
    ok &= report(&suite(2, "binomial weight sums", verification::binomial_sum_suite()));
    ok &= report(&suite(3, "weighted time integral bound", verification::time_integral_suite()));
    ok &= report(&suite(4, "comparison ODE bounds", verification::comparison_suite(100, SEED)));
    ok &= report(&suite(5, "screened potential", verification::screened_field_suite(100, SEED)));
    ok &= report(&characteristics(&cfg).unwrap_or_else(|e| CriterionResult {
        id: 6,
        name: "characteristics and ladders".into(),
        pass: false,
        detail: format!("error: {e}"),
        seconds: 0.0,
    }));

    let pipeline = cfg.initial_data().and_then(|(data, cert)| run(&cfg, &data, cert).map(|(h, r)| (data, h, r)));
    match &pipeline {
        Ok((_, _, r)) => ok &= report(&verification::pipeline_result(r)),
        Err(e) => {
            ok &= report(&CriterionResult { id: 7, name: "full pipeline".into(), pass: false, detail: format!("error: {e}"), seconds: 0.0 })
        }
    }
    match &pipeline {
        Ok((data, hist, _)) => {
            let start = Instant::now();
            match run_and_compare(&cfg, data, hist) {
                Ok((_, cmp)) => ok &= report(&verification::oracle_result(&cmp, start.elapsed().as_secs_f64())),
                Err(e) => {
                    ok &= report(&CriterionResult { id: 8, name: "oracle cross-validation".into(), pass: false, detail: format!("error: {e}"), seconds: 0.0 })
                }
            }
        }
        Err(_) => {
            ok &= report(&CriterionResult {
                id: 8,
                name: "oracle cross-validation".into(),
                pass: false,
                detail: "no Picard history to compare".into(),
                seconds: 0.0,
            })
        }
    }
    let free = cfg.initial_data().and_then(|(data, _)| verification::free_streaming_suite(&data));
    ok &= report(&suite(9, "free-streaming decay", free));
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
