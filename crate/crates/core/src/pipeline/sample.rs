//! Seeded sampling that gives the same result on every platform.
//!
//! The generator is SplitMix64. The shuffle is Fisher-Yates from the last
//! index down: for `i = n-1 ..= 1`, `j = next() % (i + 1)`, swap `i` and `j`.
//! A sample of size `n` is the first `n` elements of the shuffled list.

use super::PipelineError;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

pub fn shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = SplitMix64::new(seed);
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

pub fn sample<T: Clone>(population: &[T], n: usize, seed: u64) -> Result<Vec<T>, PipelineError> {
    if n > population.len() {
        return Err(PipelineError::Validation(format!(
            "sample of {n} from a population of {}",
            population.len()
        )));
    }
    let mut items = population.to_vec();
    shuffle(&mut items, seed);
    items.truncate(n);
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // published test vector for seed 1234567
        let mut r = SplitMix64::new(1234567);
        let got: Vec<u64> = (0..5).map(|_| r.next_u64()).collect();
        assert_eq!(
            got,
            vec![
                6457827717110365317,
                3203168211198807973,
                9817491932198370423,
                4593380528125082431,
                16408922859458223821
            ]
        );
    }

    #[test]
    fn full_sample_is_permutation() {
        let pop: Vec<u32> = (0..50).collect();
        let mut s = sample(&pop, 50, 9).unwrap();
        assert_ne!(s, pop);
        s.sort();
        assert_eq!(s, pop);
    }

    #[test]
    fn too_large() {
        assert!(sample(&[1, 2], 3, 0).is_err());
        assert_eq!(sample::<u8>(&[], 0, 0).unwrap(), Vec::<u8>::new());
    }
}
