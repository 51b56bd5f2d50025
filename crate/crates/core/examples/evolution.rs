//! A short island-model search with the built-in scripted proposer,
//! followed by a replay of its log.

use xcforge::evo::{replay, run_search, ProblemSpec, ScriptedProposer, SearchConfig};

fn main() -> xcforge::Result<()> {
    let problem = ProblemSpec {
        n_proxies: 2,
        ..Default::default()
    };
    let (dataset, fixtures) = problem.build()?;

    let config = SearchConfig {
        seed: 7,
        budget: 16,
        migration_period: 8,
        ..Default::default()
    };
    let out = run_search(&config, &dataset, &fixtures, &mut ScriptedProposer::default())?;

    println!("{:>4} {:>4} {:>6} {:>8} {:>8} {:>4}  operator", "id", "isl", "parent", "j_val", "R_evlv", "viol");
    for c in &out.candidates {
        println!(
            "{:>4} {:>4} {:>6} {:>8.4} {:>8.4} {:>4}  {}",
            c.id,
            c.island,
            c.parents.first().map_or("-".into(), |p| p.to_string()),
            c.j_val.unwrap_or(f64::NAN),
            c.penalized_score,
            c.n_violations,
            c.strategy_tags.first().map_or(c.proposer_tag.as_str(), |s| s.as_str())
        );
    }
    let seed = out.seed_candidate();
    if let Some(best) = out.best_candidate() {
        println!("\nseed R_evlv {:.4}, best #{} R_evlv {:.4}", seed.penalized_score, best.id, best.penalized_score);
        println!("{}", best.summary_text);
    }
    let r = replay(&out.log)?;
    println!("replay verified {} candidates and {} selections", r.candidates, r.selections.len());
    Ok(())
}
