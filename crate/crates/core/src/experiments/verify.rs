use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::BinaryImage;
use crate::morpho::{fill_holes, prune_pass, KernelBank};
use crate::par::Exec;
use crate::stimulus::{derive_seed, rng_for};
use crate::topology::{all_isolated, count_components, count_holes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankVerification {
    pub exhaustive_passed: usize,
    pub exhaustive_total: usize,
    pub randomized_passed: usize,
    pub randomized_total: usize,
}

impl BankVerification {
    pub fn passed(&self) -> bool {
        self.exhaustive_passed == self.exhaustive_total
            && self.randomized_passed == self.randomized_total
    }

    pub fn summary(&self) -> String {
        format!(
            "{} {}/{} exhaustive, {}/{} randomized",
            if self.passed() { "PASS" } else { "FAIL" },
            self.exhaustive_passed,
            self.exhaustive_total,
            self.randomized_passed,
            self.randomized_total
        )
    }
}

/// Runs passes to a fixed point. Every pass must keep the component and hole
/// counts; a hole-free image must end as one isolated pixel per component.
pub fn topology_preserved(img: &BinaryImage, bank: &KernelBank) -> bool {
    let (components, holes) = (count_components(img), count_holes(img));
    let mut cur = img.clone();
    for cycle in 0..=img.len() {
        let half = prune_pass(&cur, bank.kernels());
        let next = prune_pass(&half, bank.rotated());
        for state in [&half, &next] {
            if count_components(state) != components || count_holes(state) != holes {
                return false;
            }
        }
        if next == cur {
            return holes > 0 || (all_isolated(&cur) && cur.count_ones() == components);
        }
        cur = next;
        if cycle == img.len() {
            return false;
        }
    }
    false
}

/// Every image of the given side length, `2^(side*side)` in all.
pub fn verify_exhaustive(bank: &KernelBank, side: usize, exec: Exec) -> (usize, usize) {
    let total = 1usize << (side * side);
    let ok = exec.map_range(total, |bits| {
        topology_preserved(&BinaryImage::from_bits(side, side, bits as u64), bank)
    });
    (ok.into_iter().filter(|&b| b).count(), total)
}

/// Random noise images with holes filled: the engine's fixed point must hold
/// exactly one pixel per component found by union-find.
pub fn verify_randomized(
    bank: &KernelBank,
    images: usize,
    seed: u64,
    exec: Exec,
) -> Result<(usize, usize)> {
    let ok = exec.try_map_range(images, |i| -> Result<bool> {
        let mut rng = rng_for(derive_seed(seed, 0x7E, i as u64));
        let (w, h) = (rng.random_range(3..=40), rng.random_range(3..=40));
        let density = rng.random_range(0.05..0.7);
        let mut img = BinaryImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, rng.random_bool(density));
            }
        }
        let img = fill_holes(&img);
        let trace = crate::morpho::shrink(&img, bank, img.len() + 1)?;
        Ok(all_isolated(&trace.fixed_point)
            && trace.fixed_point.count_ones() == count_components(&img))
    })?;
    Ok((ok.into_iter().filter(|&b| b).count(), images))
}

pub fn verify_bank(
    bank: &KernelBank,
    random_images: usize,
    seed: u64,
    exec: Exec,
) -> Result<BankVerification> {
    let (exhaustive_passed, exhaustive_total) = verify_exhaustive(bank, 4, exec);
    let (randomized_passed, randomized_total) = verify_randomized(bank, random_images, seed, exec)?;
    Ok(BankVerification {
        exhaustive_passed,
        exhaustive_total,
        randomized_passed,
        randomized_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morpho::TemplateKernel;

    #[test]
    fn default_bank_passes_3x3_and_random() {
        let bank = KernelBank::default();
        assert_eq!(verify_exhaustive(&bank, 3, Exec::default()), (512, 512));
        assert_eq!(
            verify_randomized(&bank, 200, 1, Exec::default()).unwrap(),
            (200, 200)
        );
    }

    #[test]
    fn a_careless_bank_fails() {
        // Deleting any pixel with background to the west splits shapes.
        let k = TemplateKernel::new([0, 0, 0, -1, 1, 0, 0, 0, 0]).unwrap();
        let bank = KernelBank::new(vec![k; 6]).unwrap();
        let (ok, total) = verify_exhaustive(&bank, 3, Exec::Sequential);
        assert!(ok < total);
        let v = BankVerification {
            exhaustive_passed: ok,
            exhaustive_total: total,
            randomized_passed: 1,
            randomized_total: 1,
        };
        assert!(v.summary().starts_with("FAIL"));
    }
}
