//! Recurrent morphological counting engine.
//!
//! A bank of six 3x3 hit-or-miss templates, applied together with their
//! 180-degree rotations in alternating simultaneous passes, prunes pixels
//! without changing connectivity until every hole-free object has collapsed
//! to a single isolated pixel. Counting the survivors counts the objects.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::BinaryImage;
use crate::par::Exec;
use crate::topology;

/// Offsets of the 3x3 window in row-major order; index 4 is the centre.
pub const WINDOW: [(isize, isize); 9] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (0, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Text of the bank shipped with the engine.
pub const DEFAULT_BANK_TEXT: &str = include_str!("../assets/default_bank.txt");

/// A 3x3 template over {+1, -1, 0}: foreground, background, don't care.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TemplateKernel {
    weights: [i8; 9],
}

impl TemplateKernel {
    /// Row-major weights. The centre must be +1 and at least one cell -1.
    pub fn new(weights: [i8; 9]) -> Result<Self> {
        if weights.iter().any(|w| !(-1..=1).contains(w)) {
            return Err(Error::KernelFormat(format!(
                "weights must be in {{-1, 0, 1}}, got {weights:?}"
            )));
        }
        if weights[4] != 1 {
            return Err(Error::KernelFormat("centre weight must be +1".into()));
        }
        if !weights.contains(&-1) {
            return Err(Error::KernelFormat(
                "a kernel needs at least one background (-1) cell".into(),
            ));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[i8; 9] {
        &self.weights
    }

    /// Point reflection through the centre.
    pub fn rotated_180(&self) -> Self {
        let mut w = self.weights;
        w.reverse();
        Self { weights: w }
    }

    /// Number of +1 cells; the match threshold for [`Self::correlate`].
    pub fn threshold(&self) -> i32 {
        self.weights.iter().filter(|&&w| w == 1).count() as i32
    }

    /// Correlation of the weights with a 0/1 patch (row-major, 9 cells).
    pub fn correlate(&self, patch: &[u8; 9]) -> i32 {
        self.weights
            .iter()
            .zip(patch)
            .map(|(&w, &x)| w as i32 * x as i32)
            .sum()
    }

    /// The patch matches when the correlation reaches the number of +1 cells,
    /// which happens exactly when every +1 cell sees 1 and every -1 cell sees 0.
    pub fn matches_patch(&self, patch: &[u8; 9]) -> bool {
        self.correlate(patch) == self.threshold()
    }
}

impl fmt::Debug for TemplateKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TemplateKernel[")?;
        for row in 0..3 {
            if row > 0 {
                f.write_str(" / ")?;
            }
            for col in 0..3 {
                f.write_str(symbol(self.weights[row * 3 + col]))?;
            }
        }
        f.write_str("]")
    }
}

fn symbol(w: i8) -> &'static str {
    match w {
        1 => "+",
        -1 => "-",
        _ => "0",
    }
}

/// The 3x3 patch around (x, y), reading outside the image as background.
pub fn patch_at(img: &BinaryImage, x: usize, y: usize) -> [u8; 9] {
    let mut patch = [0u8; 9];
    for (cell, (dx, dy)) in patch.iter_mut().zip(WINDOW) {
        *cell = img.at(x as isize + dx, y as isize + dy) as u8;
    }
    patch
}

pub fn matches(img: &BinaryImage, x: usize, y: usize, kernel: &TemplateKernel) -> bool {
    kernel.matches_patch(&patch_at(img, x, y))
}

/// Six templates plus their point reflections.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelBank {
    kernels: Vec<TemplateKernel>,
    rotated: Vec<TemplateKernel>,
}

impl KernelBank {
    pub const SIZE: usize = 6;

    pub fn new(kernels: Vec<TemplateKernel>) -> Result<Self> {
        if kernels.len() != Self::SIZE {
            return Err(Error::KernelFormat(format!(
                "expected {} kernels, found {}",
                Self::SIZE,
                kernels.len()
            )));
        }
        let rotated = kernels.iter().map(TemplateKernel::rotated_180).collect();
        Ok(Self { kernels, rotated })
    }

    pub fn kernels(&self) -> &[TemplateKernel] {
        &self.kernels
    }

    pub fn rotated(&self) -> &[TemplateKernel] {
        &self.rotated
    }

    /// Total weight count of the single recurrent conv layer (6 x 3 x 3).
    pub fn weight_count(&self) -> usize {
        self.kernels.len() * 9
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        text.parse()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, k) in self.kernels.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            for row in 0..3 {
                let cells: Vec<&str> = (0..3).map(|c| symbol(k.weights[row * 3 + c])).collect();
                out.push_str(&cells.join(" "));
                out.push('\n');
            }
        }
        out
    }
}

impl Default for KernelBank {
    fn default() -> Self {
        DEFAULT_BANK_TEXT
            .parse()
            .expect("the shipped kernel bank is well formed")
    }
}

impl FromStr for KernelBank {
    type Err = Error;

    /// Six blocks of three rows of three symbols from `+ - 0`. Whitespace
    /// between symbols and blank lines are ignored; `#` starts a comment.
    fn from_str(text: &str) -> Result<Self> {
        let mut rows: Vec<[i8; 3]> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            let symbols: Vec<char> = line.chars().filter(|c| !c.is_whitespace()).collect();
            if symbols.is_empty() {
                continue;
            }
            if symbols.len() != 3 {
                return Err(Error::KernelFormat(format!(
                    "line {}: expected 3 symbols, found {}",
                    lineno + 1,
                    symbols.len()
                )));
            }
            let mut row = [0i8; 3];
            for (cell, c) in row.iter_mut().zip(symbols) {
                *cell = match c {
                    '+' | '1' => 1,
                    '-' => -1,
                    '0' | '.' => 0,
                    other => {
                        return Err(Error::KernelFormat(format!(
                            "line {}: unknown symbol {other:?}",
                            lineno + 1
                        )))
                    }
                };
            }
            rows.push(row);
        }
        if rows.len() % 3 != 0 {
            return Err(Error::KernelFormat(format!(
                "{} template rows is not a whole number of 3x3 kernels",
                rows.len()
            )));
        }
        let kernels = rows
            .chunks(3)
            .map(|block| {
                let mut w = [0i8; 9];
                for (r, row) in block.iter().enumerate() {
                    w[r * 3..r * 3 + 3].copy_from_slice(row);
                }
                TemplateKernel::new(w)
            })
            .collect::<Result<Vec<_>>>()?;
        KernelBank::new(kernels)
    }
}

impl fmt::Debug for KernelBank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.kernels).finish()
    }
}

/// Lookup table over the 256 neighbourhoods of a foreground pixel: entry `c`
/// is true when any kernel matches. Bit `i` of `c` is neighbour `i` in
/// [`WINDOW`] order with the centre skipped.
#[derive(Clone)]
struct PruneTable([bool; 256]);

impl PruneTable {
    fn build(kernels: &[TemplateKernel]) -> Self {
        let mut table = [false; 256];
        for (code, entry) in table.iter_mut().enumerate() {
            let patch = code_to_patch(code as u8);
            *entry = kernels.iter().any(|k| k.matches_patch(&patch));
        }
        Self(table)
    }
}

fn code_to_patch(code: u8) -> [u8; 9] {
    let mut patch = [0u8; 9];
    let mut bit = 0;
    for (i, cell) in patch.iter_mut().enumerate() {
        if i == 4 {
            *cell = 1;
        } else {
            *cell = (code >> bit) & 1;
            bit += 1;
        }
    }
    patch
}

fn neighbourhood_code(img: &BinaryImage, x: usize, y: usize) -> u8 {
    let mut code = 0u8;
    let mut bit = 0;
    for (i, (dx, dy)) in WINDOW.iter().enumerate() {
        if i == 4 {
            continue;
        }
        code |= (img.at(x as isize + dx, y as isize + dy) as u8) << bit;
        bit += 1;
    }
    code
}

fn prune_with_table(img: &BinaryImage, table: &PruneTable) -> (BinaryImage, usize) {
    let mut out = img.clone();
    let mut removed = 0;
    for (x, y) in img.ones() {
        if table.0[neighbourhood_code(img, x, y) as usize] {
            out.set(x, y, false);
            removed += 1;
        }
    }
    (out, removed)
}

/// Deletes, simultaneously, every foreground pixel whose neighbourhood in
/// the input matches any of `kernels`.
pub fn prune_pass(img: &BinaryImage, kernels: &[TemplateKernel]) -> BinaryImage {
    prune_with_table(img, &PruneTable::build(kernels)).0
}

/// Result of running [`shrink`] to its fixed point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShrinkTrace {
    /// Full cycles run, including the final cycle that removed nothing.
    pub iterations: usize,
    /// Pixels removed by each cycle; every entry but the last is positive.
    pub pixels_removed: Vec<usize>,
    pub fixed_point: BinaryImage,
}

/// Alternates the bank and its rotations until a whole cycle removes nothing.
pub fn shrink(img: &BinaryImage, bank: &KernelBank, max_cycles: usize) -> Result<ShrinkTrace> {
    Shrinker::new(bank).run(img, max_cycles)
}

/// Precomputed pruning tables for one bank; cheap to share across threads.
#[derive(Clone)]
pub struct Shrinker {
    forward: PruneTable,
    backward: PruneTable,
}

impl Shrinker {
    pub fn new(bank: &KernelBank) -> Self {
        Self {
            forward: PruneTable::build(bank.kernels()),
            backward: PruneTable::build(bank.rotated()),
        }
    }

    /// One full cycle: bank pass then rotated pass.
    pub fn cycle(&self, img: &BinaryImage) -> (BinaryImage, usize) {
        let (a, ra) = prune_with_table(img, &self.forward);
        let (b, rb) = prune_with_table(&a, &self.backward);
        (b, ra + rb)
    }

    pub fn run(&self, img: &BinaryImage, max_cycles: usize) -> Result<ShrinkTrace> {
        assert!(max_cycles >= 1, "max_cycles must be at least 1");
        let mut current = img.clone();
        let mut removed = Vec::new();
        for _ in 0..max_cycles {
            let (next, n) = self.cycle(&current);
            removed.push(n);
            current = next;
            if n == 0 {
                return Ok(ShrinkTrace {
                    iterations: removed.len(),
                    pixels_removed: removed,
                    fixed_point: current,
                });
            }
        }
        Err(Error::NonConvergence { cycles: max_cycles })
    }
}

/// Default cycle budget for an image: width + height.
pub fn default_max_cycles(img: &BinaryImage) -> usize {
    (img.width() + img.height()).max(1)
}

/// What to do when the input contains holes, which the engine cannot count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolePolicy {
    /// Refuse with [`Error::HoleDetected`].
    #[default]
    Strict,
    /// Run anyway; the result may differ from the true count.
    Lenient,
    /// Fill enclosed background first, turning outlines into solid regions.
    Fill,
}

/// Shrink-and-count engine bound to one kernel bank.
#[derive(Clone)]
pub struct Engine {
    bank: KernelBank,
    shrinker: Shrinker,
    pub hole_policy: HolePolicy,
    pub max_cycles: Option<usize>,
}

impl Engine {
    pub fn new(bank: KernelBank, hole_policy: HolePolicy) -> Self {
        let shrinker = Shrinker::new(&bank);
        Self {
            bank,
            shrinker,
            hole_policy,
            max_cycles: None,
        }
    }

    pub fn bank(&self) -> &KernelBank {
        &self.bank
    }

    pub fn shrinker(&self) -> &Shrinker {
        &self.shrinker
    }

    pub fn trace(&self, img: &BinaryImage) -> Result<ShrinkTrace> {
        let filled;
        let input = match self.hole_policy {
            HolePolicy::Lenient => img,
            HolePolicy::Strict => {
                let holes = topology::count_holes(img);
                if holes > 0 {
                    return Err(Error::HoleDetected { holes });
                }
                img
            }
            HolePolicy::Fill => {
                filled = fill_holes(img);
                &filled
            }
        };
        let budget = self.max_cycles.unwrap_or_else(|| default_max_cycles(input));
        self.shrinker.run(input, budget)
    }

    pub fn subitize(&self, img: &BinaryImage) -> Result<usize> {
        Ok(self.trace(img)?.fixed_point.count_ones())
    }

    pub fn subitize_batch(&self, images: &[BinaryImage], exec: Exec) -> Vec<Result<usize>> {
        exec.map(images, |img| self.subitize(img))
    }
}

impl Default for Engine {
    fn default() -> Self {
        Self::new(KernelBank::default(), HolePolicy::Strict)
    }
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("bank", &self.bank)
            .field("hole_policy", &self.hole_policy)
            .field("max_cycles", &self.max_cycles)
            .finish()
    }
}

/// Counts objects by shrinking to the fixed point. The input's components
/// are assumed hole-free; see [`Engine`] for checked variants.
pub fn subitize(img: &BinaryImage, bank: &KernelBank) -> Result<usize> {
    Ok(shrink(img, bank, default_max_cycles(img))?
        .fixed_point
        .count_ones())
}

/// Makes the minority colour of the outer pixel ring the foreground (1).
/// Images whose border is mostly white are complemented.
pub fn normalize_polarity(img: &BinaryImage) -> BinaryImage {
    let (ones, total) = img.border_ones();
    if 2 * ones > total {
        img.complement()
    } else {
        img.clone()
    }
}

/// Foreground pixels with at least one background 4-neighbour.
fn inner_boundary(img: &BinaryImage) -> BinaryImage {
    let mut out = BinaryImage::new(img.width(), img.height());
    for (x, y) in img.ones() {
        let (xi, yi) = (x as isize, y as isize);
        let edge = !img.at(xi - 1, yi)
            || !img.at(xi + 1, yi)
            || !img.at(xi, yi - 1)
            || !img.at(xi, yi + 1);
        if edge {
            out.set(x, y, true);
        }
    }
    out
}

/// Unified boundary representation: normalize polarity, then keep the
/// one-pixel inner boundary of every object.
pub fn to_boundary(img: &BinaryImage) -> BinaryImage {
    inner_boundary(&normalize_polarity(img))
}

/// Plain erosion by the 4-neighbour cross: strips one boundary layer without
/// regard for connectivity.
pub fn erode_one_layer(img: &BinaryImage) -> BinaryImage {
    img.difference(&inner_boundary(img))
}

/// Sets every background pixel that cannot reach the border through
/// 4-connected background.
pub fn fill_holes(img: &BinaryImage) -> BinaryImage {
    let (w, h) = (img.width(), img.height());
    let mut outside = vec![false; w * h];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if (x == 0 || y == 0 || x == w - 1 || y == h - 1) && !img.get(x, y) {
                outside[y * w + x] = true;
                stack.push((x, y));
            }
        }
    }
    while let Some((x, y)) = stack.pop() {
        let mut visit = |nx: usize, ny: usize| {
            let i = ny * w + nx;
            if !outside[i] && !img.get(nx, ny) {
                outside[i] = true;
                stack.push((nx, ny));
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }
    let pixels = outside.iter().map(|&o| (!o) as u8).collect();
    BinaryImage::from_pixels(w, h, pixels).expect("same dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{all_isolated, count_components, count_holes};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disk(size: usize, cx: f64, cy: f64, r: f64) -> BinaryImage {
        let mut img = BinaryImage::new(size, size);
        for y in 0..size {
            for x in 0..size {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                if (px - cx).powi(2) + (py - cy).powi(2) <= r * r {
                    img.set(x, y, true);
                }
            }
        }
        img
    }

    #[test]
    fn default_bank_parses_and_round_trips() {
        let bank = KernelBank::default();
        assert_eq!(bank.kernels().len(), 6);
        assert_eq!(bank.weight_count(), 54);
        for (k, r) in bank.kernels().iter().zip(bank.rotated()) {
            assert_eq!(k.weights()[4], 1);
            assert_eq!(r.rotated_180(), *k);
            for i in 0..9 {
                assert_eq!(k.weights()[i], r.weights()[8 - i]);
            }
        }
        let again: KernelBank = bank.to_text().parse().unwrap();
        assert_eq!(again, bank);
    }

    #[test]
    fn bank_parse_errors() {
        assert!("+ + +\n".parse::<KernelBank>().is_err());
        assert!(
            "- - -\n0 + 0\n0 + 0\n".parse::<KernelBank>().is_err(),
            "only one kernel"
        );
        let bad_symbol = DEFAULT_BANK_TEXT.replacen("0 + 0", "0 + x", 1);
        assert!(bad_symbol.parse::<KernelBank>().is_err());
        let bad_centre = DEFAULT_BANK_TEXT.replacen("0 + 0", "0 - 0", 1);
        assert!(bad_centre.parse::<KernelBank>().is_err());
        assert!(TemplateKernel::new([0, 0, 0, 0, 1, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn centre_only_kernel_matches_any_foreground_pixel() {
        // Not a legal bank member (no -1 cell), but the matching rule still applies.
        let k = TemplateKernel {
            weights: [0, 0, 0, 0, 1, 0, 0, 0, 0],
        };
        let img = BinaryImage::from_ascii("###\n###\n###");
        assert!(matches(&img, 1, 1, &k));
        assert!(!matches(&img.complement(), 1, 1, &k));
    }

    #[test]
    fn correlation_agrees_with_cellwise_comparison_on_all_patches() {
        let bank = KernelBank::default();
        for code in 0u32..512 {
            let mut patch = [0u8; 9];
            for (i, cell) in patch.iter_mut().enumerate() {
                *cell = ((code >> i) & 1) as u8;
            }
            for k in bank.kernels().iter().chain(bank.rotated()) {
                let direct = k.weights().iter().zip(&patch).all(|(&w, &x)| match w {
                    1 => x == 1,
                    -1 => x == 0,
                    _ => true,
                });
                assert_eq!(k.matches_patch(&patch), direct, "{k:?} on {patch:?}");
                if patch[4] == 0 {
                    assert!(!k.matches_patch(&patch));
                }
            }
        }
    }

    #[test]
    fn prune_pass_basics() {
        let bank = KernelBank::default();
        let empty = BinaryImage::new(5, 5);
        assert_eq!(prune_pass(&empty, bank.kernels()), empty);
        let mut lone = BinaryImage::new(5, 5);
        lone.set(2, 2, true);
        assert_eq!(prune_pass(&lone, bank.kernels()), lone);
        assert_eq!(prune_pass(&lone, bank.rotated()), lone);
    }

    #[test]
    fn exhaustive_4x4_every_pass_preserves_topology() {
        let shrinker = Shrinker::new(&KernelBank::default());
        for bits in 0u64..(1 << 16) {
            let img = BinaryImage::from_bits(4, 4, bits);
            let comps = count_components(&img);
            let holes = count_holes(&img);
            let mut current = img.clone();
            loop {
                let (a, ra) = prune_with_table(&current, &shrinker.forward);
                assert!(a.is_subset_of(&current));
                assert_eq!(count_components(&a), comps, "{img:?}");
                assert_eq!(count_holes(&a), holes, "{img:?}");
                let (b, rb) = prune_with_table(&a, &shrinker.backward);
                assert_eq!(count_components(&b), comps, "{img:?}");
                assert_eq!(count_holes(&b), holes, "{img:?}");
                current = b;
                if ra + rb == 0 {
                    break;
                }
            }
            if holes == 0 {
                assert_eq!(current.count_ones(), comps, "{img:?}");
                assert!(all_isolated(&current));
            }
        }
    }

    #[test]
    fn single_pixel_is_a_fixed_point_after_one_cycle() {
        let mut img = BinaryImage::new(7, 7);
        img.set(3, 3, true);
        let trace = shrink(&img, &KernelBank::default(), 10).unwrap();
        assert_eq!(trace.iterations, 1);
        assert_eq!(trace.pixels_removed, vec![0]);
        assert_eq!(trace.fixed_point, img);
    }

    #[test]
    fn disk_shrinks_to_one_pixel_within_diameter_cycles() {
        let img = disk(32, 16.3, 15.8, 10.0);
        let trace = shrink(&img, &KernelBank::default(), 64).unwrap();
        assert_eq!(trace.fixed_point.count_ones(), 1);
        assert!(all_isolated(&trace.fixed_point));
        assert!(trace.iterations <= 20 + 2, "{} cycles", trace.iterations);
        let (last, rest) = trace.pixels_removed.split_last().unwrap();
        assert_eq!(*last, 0);
        assert!(rest.iter().all(|&n| n > 0));
    }

    #[test]
    fn non_convergence_is_reported() {
        let img = disk(32, 16.0, 16.0, 10.0);
        assert!(matches!(
            shrink(&img, &KernelBank::default(), 2),
            Err(Error::NonConvergence { cycles: 2 })
        ));
    }

    #[test]
    fn empty_image_counts_zero() {
        assert_eq!(
            subitize(&BinaryImage::new(16, 16), &KernelBank::default()).unwrap(),
            0
        );
    }

    #[test]
    fn ring_policies() {
        let outer = disk(32, 16.0, 16.0, 9.0);
        let inner = disk(32, 16.0, 16.0, 7.0);
        let ring = outer.difference(&inner);
        assert_eq!(count_holes(&ring), 1);
        let strict = Engine::new(KernelBank::default(), HolePolicy::Strict);
        assert!(matches!(
            strict.subitize(&ring),
            Err(Error::HoleDetected { holes: 1 })
        ));
        let lenient = Engine::new(KernelBank::default(), HolePolicy::Lenient);
        // A ring cannot shrink to a point; it stops at a closed curve.
        assert!(lenient.subitize(&ring).unwrap() > 1);
        let fill = Engine::new(KernelBank::default(), HolePolicy::Fill);
        assert_eq!(fill.subitize(&ring).unwrap(), 1);
    }

    #[test]
    fn random_blobs_preserve_count_and_isolate() {
        let shrinker = Shrinker::new(&KernelBank::default());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let px = (0..24 * 24).map(|_| rng.random_bool(0.55) as u8).collect();
            let img = fill_holes(&BinaryImage::from_pixels(24, 24, px).unwrap());
            let comps = count_components(&img);
            let mut current = img.clone();
            loop {
                let (next, n) = shrinker.cycle(&current);
                assert!(next.is_subset_of(&current));
                assert_eq!(count_components(&next), comps);
                current = next;
                if n == 0 {
                    break;
                }
            }
            assert_eq!(current.count_ones(), comps);
            assert!(all_isolated(&current));
        }
    }

    #[test]
    fn boundary_of_square() {
        let mut img = BinaryImage::new(9, 9);
        for y in 2..7 {
            for x in 2..7 {
                img.set(x, y, true);
            }
        }
        let b = to_boundary(&img);
        assert_eq!(b.count_ones(), 16);
        assert_eq!(to_boundary(&img.complement()), b);
        assert_eq!(erode_one_layer(&img).count_ones(), 9);
    }

    #[test]
    fn erosion_basics() {
        let sq = BinaryImage::from_ascii(".....\n.###.\n.###.\n.###.\n.....");
        let eroded = erode_one_layer(&sq);
        assert_eq!(eroded.count_ones(), 1);
        assert!(eroded.get(2, 2));
        let line = BinaryImage::from_ascii("......\n.####.\n......");
        assert_eq!(erode_one_layer(&line).count_ones(), 0);
    }

    #[test]
    fn erosion_is_image_minus_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let mut img = BinaryImage::new(20, 20);
            for y in 1..19 {
                for x in 1..19 {
                    img.set(x, y, rng.random_bool(0.6));
                }
            }
            // Border kept black, so polarity normalization is the identity.
            assert_eq!(erode_one_layer(&img), img.difference(&to_boundary(&img)));
        }
    }

    #[test]
    fn polarity_normalization() {
        let img = disk(16, 8.0, 8.0, 4.0);
        assert_eq!(normalize_polarity(&img), img);
        assert_eq!(normalize_polarity(&img.complement()), img);
    }

    #[test]
    fn fill_holes_closes_rings_only() {
        let ring = BinaryImage::from_ascii(".....\n.###.\n.#.#.\n.###.\n.....");
        let filled = fill_holes(&ring);
        assert_eq!(filled.count_ones(), 9);
        let open = BinaryImage::from_ascii(".....\n.###.\n.#...\n.###.\n.....");
        assert_eq!(fill_holes(&open), open);
    }
}
