//! Runs the default three-room synthetic study and prints per-room and
//! averaged results for the standard feature sets.
//!
//! cargo run --release -p co2occ --example default_study [seed] [task] [sets]
//!
//! `sets` is a `;`-separated list such as `avg,fd;avg,fd,vd`.

use std::time::Instant;

use co2occ::features::{feature_set_label, parse_feature_list};
use co2occ::ingest::IngestConfig;
use co2occ::modelsel::{run_experiment, ExperimentOptions, GridSpec, SplitPlan, Task};
use co2occ::simulator::{default_scenarios, simulate, DEFAULT_SEED};

fn main() -> co2occ::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args
        .next()
        .map_or(DEFAULT_SEED, |s| s.parse().expect("seed"));
    let task: Task = args.next().map_or(Ok(Task::State), |s| s.parse())?;
    let ingest = IngestConfig {
        native_interval_s: 15,
        target_interval_s: 300,
    };
    let datasets = default_scenarios(seed)
        .iter()
        .map(|s| simulate(&s.config, &s.schedule)?.to_dataset(&ingest))
        .collect::<co2occ::Result<Vec<_>>>()?;
    let plan = SplitPlan {
        seed,
        ..SplitPlan::default()
    };
    let opts = ExperimentOptions::default();
    let sets = args.next().unwrap_or_else(|| {
        "avg,fd;avg,fd,vd;avg,fd,vd,fdvd,hd;avg,fd,vent;avg,fd,vd,fdvd,hd,vent".into()
    });
    for set in sets.split(';') {
        let kinds = parse_feature_list(set)?;
        let t = Instant::now();
        let mut acc = Vec::new();
        let mut rmse = Vec::new();
        for ds in &datasets {
            let r = run_experiment(ds, &kinds, task, &plan, &GridSpec::default(), &opts)?;
            acc.push(r.mean.accuracy);
            rmse.push(r.mean.rmse);
            let imp: Vec<String> = r
                .importance
                .iter()
                .map(|f| format!("{}={:.3}", f.feature, f.mean))
                .collect();
            println!(
                "  {:<6} acc {:.4} rmse {:.3} C/γ exps {:?} {}",
                r.room_id,
                r.mean.accuracy,
                r.mean.rmse,
                r.rounds
                    .iter()
                    .map(|x| (x.c_exp, x.gamma_exp))
                    .collect::<Vec<_>>(),
                imp.join(" ")
            );
        }
        let n = acc.len() as f64;
        println!(
            "{:<28} mean acc {:.4} mean rmse {:.3} ({:.1}s)",
            feature_set_label(&kinds),
            acc.iter().sum::<f64>() / n,
            rmse.iter().sum::<f64>() / n,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
