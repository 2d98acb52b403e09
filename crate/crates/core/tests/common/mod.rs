#![allow(dead_code)]

use latgen_core::lattice::{epsilon, or, seq, wrd, Lattice};
use num_bigint::BigUint;
use proptest::prelude::*;

#[derive(Debug, Clone)]
pub enum Tree {
    W(String),
    Eps,
    Seq(Vec<Tree>),
    Or(Vec<Tree>),
}

pub fn tree(depth: u32) -> impl Strategy<Value = Tree> {
    let leaf = prop_oneof![
        5 => prop::sample::select(vec!["the", "a", "deficit", "deficits", "fell", "Smith", "rose"])
            .prop_map(|w| Tree::W(w.to_string())),
        1 => Just(Tree::Eps),
    ];
    leaf.prop_recursive(depth, 64, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..4).prop_map(Tree::Seq),
            prop::collection::vec(inner, 1..4).prop_map(Tree::Or),
        ]
    })
}

pub fn build(t: &Tree) -> Lattice {
    match t {
        Tree::W(w) => wrd(w).unwrap(),
        Tree::Eps => epsilon(),
        Tree::Seq(k) => seq(k.iter().map(build).collect()).unwrap(),
        Tree::Or(k) => or(k.iter().map(build).collect()).unwrap(),
    }
}

pub fn count(t: &Tree) -> BigUint {
    match t {
        Tree::W(_) | Tree::Eps => BigUint::from(1u32),
        Tree::Seq(k) => k.iter().map(count).product(),
        Tree::Or(k) => k.iter().map(count).sum(),
    }
}

pub fn corpus_sentences(lines: &[&str]) -> Vec<Vec<String>> {
    lines.iter().map(|l| l.split_whitespace().map(String::from).collect()).collect()
}
