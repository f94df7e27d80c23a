//! Depth-2 search: a few global seeds, each refined locally under a
//! synthetic attention mask, versus Best-of-N at the same sample count.

use lotts::search::{best_of_n, dfs_search, Generator, SearchConfig, SyntheticMasks};
use lotts::testbed::{DefectSpec, NoiseSchedule, WorldSpec};

fn main() -> lotts::Result<()> {
    let world = WorldSpec::default().build()?;
    let schedule = NoiseSchedule::cosine(1.0, 20)?;
    let generator = Generator::new(&world, schedule, Some(DefectSpec { min_count: 0, max_count: 3, magnitude: 2.0 }))?;
    let cfg = SearchConfig::default_for(&schedule)?;
    let masks = SyntheticMasks::default();

    let found = dfs_search(&generator, &masks, &cfg, 42)?;
    println!("DFS with {} seeds x {} refinements ({} NFE)", cfg.seeds, cfg.refinements, found.nfe);
    for (lineage, score) in &found.evaluated {
        println!("  {lineage:?}: {score:.3}");
    }
    println!("best {:?} at {:.3}", found.best.lineage, found.best.score);

    let bon = best_of_n(&generator, cfg.candidates(), 42)?;
    println!("Best-of-{} ({} NFE): {:.3}", cfg.candidates(), bon.nfe, bon.best.score);
    Ok(())
}
