//! Synthetic workloads for the benchmarks.

use latgen_core::lattice::{epsilon, or, seq, wrd, Lattice};
use latgen_core::lm::{train_text, LmConfig, NGramModel};

const WORDS: &[&str] = &["the", "a", "deficit", "deficits", "fell", "rose", "large", "federal", "budget", "sharply"];

/// A chain of `blocks` alternations, each offering `width` words plus an epsilon.
pub fn chain(blocks: usize, width: usize) -> Lattice {
    let parts = (0..blocks)
        .map(|b| {
            let mut alts: Vec<Lattice> =
                (0..width).map(|i| wrd(WORDS[(b * 3 + i) % WORDS.len()]).unwrap()).collect();
            alts.push(epsilon());
            or(alts).unwrap()
        })
        .collect();
    seq(parts).unwrap()
}

/// A small model over the same vocabulary.
pub fn toy_model(order: usize) -> NGramModel {
    let text = "The deficit fell. A large federal deficit rose sharply. The budget deficits fell. \
                The federal budget rose. A deficit fell sharply. The large deficits rose.";
    train_text(text, order, LmConfig::default()).unwrap()
}
