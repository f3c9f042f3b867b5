//! Paired t-tests over per-dimension alpha vectors, Bonferroni-adjusted
//! across all condition pairs.

use std::collections::BTreeMap;

use personasim::condition::ConditionId;
use personasim::stats::pairwise_alpha_comparisons;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let alphas = BTreeMap::from([
        (ConditionId::Baseline, [0.68, 0.72, 0.71, 0.70, 0.70]),
        (ConditionId::PlusMemory, [0.69, 0.73, 0.70, 0.71, 0.70]),
        (ConditionId::PlusCcd, [0.88, 0.91, 0.89, 0.90, 0.88]),
        (ConditionId::PlusLora, [0.93, 0.95, 0.94, 0.95, 0.93]),
    ]);
    println!("{:<22} {:>8} {:>8} {:>3} {:>10} {:>10}", "pair", "delta", "t", "df", "p", "p (adj)");
    for c in pairwise_alpha_comparisons(&alphas)? {
        println!(
            "{:<22} {:>+8.3} {:>8.2} {:>3} {:>10.4} {:>10.4}{}",
            format!("{} vs {}", c.condition_a.label(), c.condition_b.label()),
            c.delta_mean,
            c.t,
            c.df,
            c.p_raw,
            c.p_adjusted,
            c.stars
        );
    }
    Ok(())
}
