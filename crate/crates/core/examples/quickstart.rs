//! Minimal end-to-end loop: synthesize a world, fit contexts, replay
//! Thompson sampling, and print the headline numbers.

use bidshade::{
    fit_binner, generate_synthetic, run, FilterConfig, RunConfig, SyntheticEnvConfig,
    ThompsonSampling,
};

fn main() -> bidshade::Result<()> {
    let data = generate_synthetic(&SyntheticEnvConfig::default())?.impressions;
    let binner = fit_binner(&data, 10, None)?;
    let mut policy = ThompsonSampling::new(FilterConfig::for_particles(100), 10, 7)?;
    let metrics = run(&mut policy, &data, &binner, &RunConfig::default())?;

    let last = metrics.final_checkpoint().expect("non-empty run");
    println!("impressions      {}", last.n);
    println!("avg reward       {:.4}", last.avg_reward);
    println!("oracle avg       {:.4}", last.oracle_avg_reward);
    println!("win rate         {:.3}", last.success_rate);
    println!("median decide+update {:.1} µs", metrics.decision_time.median_ns as f64 / 1e3);
    Ok(())
}
