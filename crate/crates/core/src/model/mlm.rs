//! Token corruption for masked language modeling.
//!
//! Each position is selected independently with probability `mask_prob`.
//! A selected position becomes the mask token 80% of the time, a uniformly
//! random regular token 10% of the time, and stays unchanged otherwise. The
//! loss is computed over selected positions only.

use alloc::vec::Vec;

use rand::Rng as _;

use super::encoder::{FIRST_REGULAR_ID, MASK_ID};
use crate::rng::Rng;

pub const DEFAULT_MASK_PROB: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Corruption {
    Mask,
    Random,
    Keep,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskedSequence {
    pub input_ids: Vec<u32>,
    /// `(position, original id, corruption applied)` for every selected position.
    pub targets: Vec<(usize, u32, Corruption)>,
}

pub fn mask_tokens(ids: &[u32], mask_prob: f64, vocab_size: usize, rng: &mut Rng) -> MaskedSequence {
    let mut input_ids = ids.to_vec();
    let mut targets = Vec::new();
    for (i, &id) in ids.iter().enumerate() {
        if id < FIRST_REGULAR_ID || !rng.gen_bool(mask_prob) {
            continue;
        }
        let u: f64 = rng.gen();
        let kind = if u < 0.8 {
            input_ids[i] = MASK_ID;
            Corruption::Mask
        } else if u < 0.9 {
            input_ids[i] = rng.gen_range(FIRST_REGULAR_ID..vocab_size as u32);
            Corruption::Random
        } else {
            Corruption::Keep
        };
        targets.push((i, id, kind));
    }
    MaskedSequence { input_ids, targets }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn zero_probability_selects_nothing() {
        let m = mask_tokens(&[2, 3, 4, 5], 0.0, 10, &mut seeded(1));
        assert!(m.targets.is_empty());
        assert_eq!(m.input_ids, alloc::vec![2, 3, 4, 5]);
    }

    #[test]
    fn specials_are_never_selected() {
        let m = mask_tokens(&[0, 1, 0, 1], 1.0, 10, &mut seeded(1));
        assert!(m.targets.is_empty());
    }

    #[test]
    fn full_probability_selects_everything() {
        let ids: Vec<u32> = (2..40).collect();
        let m = mask_tokens(&ids, 1.0, 50, &mut seeded(2));
        assert_eq!(m.targets.len(), ids.len());
        for &(pos, orig, kind) in &m.targets {
            assert_eq!(ids[pos], orig);
            match kind {
                Corruption::Mask => assert_eq!(m.input_ids[pos], MASK_ID),
                Corruption::Keep => assert_eq!(m.input_ids[pos], orig),
                Corruption::Random => assert!(m.input_ids[pos] >= FIRST_REGULAR_ID),
            }
        }
    }
}
