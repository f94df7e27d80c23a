//! Synthesize contrastive attention for a planted defect region and turn it
//! into a binary mask, with and without query propagation.

use lotts::mask::{mask_gen, mask_gen_with, Grid, PropagationMatrix};
use lotts::seed::trial_rng;
use lotts::testbed::{synth_attention, SynthAttention};

fn show(grid: Grid, bits: &[bool]) {
    for r in 0..grid.rows {
        let line: String = (0..grid.cols)
            .map(|c| if bits[r * grid.cols + c] { '#' } else { '.' })
            .collect();
        println!("  {line}");
    }
}

fn main() -> lotts::Result<()> {
    let grid = Grid::new(8, 8)?;
    let planted = [18, 19, 26, 27, 28];
    let params = SynthAttention::default();
    let (bundle, queries) = synth_attention(grid, &planted, &params, &mut trial_rng(11, 0, 0))?;

    let ratio = planted.len() as f64 / grid.len() as f64;
    let propagated = mask_gen(&bundle, &queries, 0.5, ratio)?;
    let raw = mask_gen_with(&bundle, &PropagationMatrix::identity(grid.len()), 0.5, ratio)?;

    println!("planted {planted:?}");
    println!("with query propagation: {:?}", propagated.selected());
    show(grid, propagated.bits());
    println!("without propagation: {:?}", raw.selected());
    show(grid, raw.bits());
    let hits = |m: &lotts::mask::DefectMask| planted.iter().filter(|&&j| m.is_set(j)).count();
    println!("recall: propagated {}/{}, raw {}/{}", hits(&propagated), planted.len(), hits(&raw), planted.len());
    Ok(())
}
