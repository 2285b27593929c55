//! Connectivity ground truth: component labeling, hole counting and
//! isolation tests.
//!
//! Foreground (1) pixels are 8-connected, background (0) pixels 4-connected.
//! This is the Jordan-consistent pairing the shrinking templates assume.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::BinaryImage;

/// Disjoint-set forest with path compression and union by rank.
#[derive(Debug, Clone, Default)]
pub struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            parent: Vec::with_capacity(n),
            rank: Vec::with_capacity(n),
        }
    }

    pub fn make_set(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.rank.push(0);
        id
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    pub fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        let (hi, lo) = match self.rank[ra as usize].cmp(&self.rank[rb as usize]) {
            std::cmp::Ordering::Less => (rb, ra),
            std::cmp::Ordering::Greater => (ra, rb),
            std::cmp::Ordering::Equal => {
                self.rank[ra as usize] += 1;
                (ra, rb)
            }
        };
        self.parent[lo as usize] = hi;
        hi
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }
}

/// Per-pixel component labels; 0 is background, components are 1..=count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub count: usize,
}

impl LabelMap {
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Pixel count of each component, indexed by `label - 1`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in &self.labels {
            if l > 0 {
                sizes[l as usize - 1] += 1;
            }
        }
        sizes
    }

    /// Binary mask of one component.
    pub fn mask(&self, label: u32) -> BinaryImage {
        let pixels = self.labels.iter().map(|&l| (l == label) as u8).collect();
        BinaryImage::from_pixels(self.width, self.height, pixels).expect("same dimensions")
    }
}

/// Two-pass raster labeling of 8-connected foreground. Labels are numbered in
/// the raster order in which each component is first met.
pub fn label_components(img: &BinaryImage) -> LabelMap {
    let (w, h) = (img.width(), img.height());
    let mut provisional = vec![u32::MAX; w * h];
    let mut sets = UnionFind::with_capacity(64);

    for y in 0..h {
        for x in 0..w {
            if !img.get(x, y) {
                continue;
            }
            // Already-visited 8-neighbours: W, NW, N, NE.
            let mut current: Option<u32> = None;
            let (xi, yi) = (x as isize, y as isize);
            for (dx, dy) in [(-1isize, 0isize), (-1, -1), (0, -1), (1, -1)] {
                if img.at(xi + dx, yi + dy) {
                    let n = provisional[(yi + dy) as usize * w + (xi + dx) as usize];
                    current = Some(match current {
                        None => n,
                        Some(c) => {
                            sets.union(c, n);
                            c.min(n)
                        }
                    });
                }
            }
            provisional[y * w + x] = current.unwrap_or_else(|| sets.make_set());
        }
    }

    // Second pass: resolve roots and renumber 1..K in raster discovery order.
    let mut root_label = vec![0u32; sets.len()];
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    for (i, &p) in provisional.iter().enumerate() {
        if p == u32::MAX {
            continue;
        }
        let root = sets.find(p) as usize;
        if root_label[root] == 0 {
            next += 1;
            root_label[root] = next;
        }
        labels[i] = root_label[root];
    }

    LabelMap {
        width: w,
        height: h,
        labels,
        count: next as usize,
    }
}

/// Number of 8-connected foreground components.
pub fn count_components(img: &BinaryImage) -> usize {
    label_components(img).count
}

/// Number of 4-connected background regions that do not reach the image
/// border (the virtual frame outside the image counts as border background).
pub fn count_holes(img: &BinaryImage) -> usize {
    let (w, h) = (img.width() + 2, img.height() + 2);
    let bg = |x: usize, y: usize| -> bool {
        if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
            true
        } else {
            !img.get(x - 1, y - 1)
        }
    };

    let mut provisional = vec![u32::MAX; w * h];
    let mut sets = UnionFind::with_capacity(16);
    for y in 0..h {
        for x in 0..w {
            if !bg(x, y) {
                continue;
            }
            let west = (x > 0 && bg(x - 1, y)).then(|| provisional[y * w + x - 1]);
            let north = (y > 0 && bg(x, y - 1)).then(|| provisional[(y - 1) * w + x]);
            provisional[y * w + x] = match (west, north) {
                (Some(a), Some(b)) => {
                    sets.union(a, b);
                    a.min(b)
                }
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => sets.make_set(),
            };
        }
    }
    let mut roots: Vec<u32> = provisional
        .iter()
        .filter(|&&p| p != u32::MAX)
        .map(|&p| sets.find(p))
        .collect();
    roots.sort_unstable();
    roots.dedup();
    // The padded frame is one region that touches the border by construction.
    roots.len().saturating_sub(1)
}

/// True when the foreground pixel at (x, y) has no foreground 8-neighbour.
///
/// The pixel itself is expected to be foreground; out-of-image coordinates are
/// an error.
pub fn is_isolated(img: &BinaryImage, x: i64, y: i64) -> Result<bool> {
    img.check_bounds(x, y)?;
    let (x, y) = (x as isize, y as isize);
    for dy in -1..=1 {
        for dx in -1..=1 {
            if (dx, dy) != (0, 0) && img.at(x + dx, y + dy) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// True when every foreground pixel is isolated.
pub fn all_isolated(img: &BinaryImage) -> bool {
    img.ones()
        .all(|(x, y)| is_isolated(img, x as i64, y as i64).expect("in bounds"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent breadth-first flood fill.
    fn flood_fill_count(img: &BinaryImage, foreground: bool, eight: bool) -> usize {
        let (w, h) = (img.width() as isize, img.height() as isize);
        let mut seen = vec![false; (w * h) as usize];
        let mut count = 0;
        let mut queue = std::collections::VecDeque::new();
        for y in 0..h {
            for x in 0..w {
                let i = (y * w + x) as usize;
                if img.at(x, y) != foreground || seen[i] {
                    continue;
                }
                count += 1;
                seen[i] = true;
                queue.push_back((x, y));
                while let Some((cx, cy)) = queue.pop_front() {
                    for dy in -1..=1isize {
                        for dx in -1..=1isize {
                            if (dx, dy) == (0, 0) || (!eight && dx != 0 && dy != 0) {
                                continue;
                            }
                            let (nx, ny) = (cx + dx, cy + dy);
                            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                                continue;
                            }
                            let j = (ny * w + nx) as usize;
                            if !seen[j] && img.at(nx, ny) == foreground {
                                seen[j] = true;
                                queue.push_back((nx, ny));
                            }
                        }
                    }
                }
            }
        }
        count
    }

    fn flood_fill_holes(img: &BinaryImage) -> usize {
        let mut padded = BinaryImage::new(img.width() + 2, img.height() + 2);
        for (x, y) in img.ones() {
            padded.set(x + 1, y + 1, true);
        }
        flood_fill_count(&padded, false, false) - 1
    }

    #[test]
    fn empty_image_has_no_components() {
        assert_eq!(count_components(&BinaryImage::new(8, 8)), 0);
        assert_eq!(count_components(&BinaryImage::new(0, 0)), 0);
    }

    #[test]
    fn single_pixel() {
        let mut img = BinaryImage::new(10, 10);
        img.set(5, 5, true);
        assert_eq!(count_components(&img), 1);
        assert!(is_isolated(&img, 5, 5).unwrap());
    }

    #[test]
    fn diagonal_pixels_are_connected() {
        let img = BinaryImage::from_ascii("#.\n.#");
        assert_eq!(count_components(&img), 1);
        assert_eq!(count_components(&img.complement()), 1);
    }

    #[test]
    fn two_squares_labeled_in_raster_order() {
        let img = BinaryImage::from_ascii(
            "
            ......
            .##...
            .##.##
            ....##
            ",
        );
        let map = label_components(&img);
        assert_eq!(map.count, 2);
        assert_eq!(map.get(1, 1), 1);
        assert_eq!(map.get(4, 2), 2);
        assert_eq!(map.sizes(), vec![4, 4]);
        for (i, &l) in map.labels.iter().enumerate() {
            assert_eq!(
                l > 0,
                img.pixels()[i] == 1,
                "labels partition the foreground"
            );
        }
    }

    #[test]
    fn u_shape_merges_late() {
        // Two branches discovered separately and joined on the last row.
        let img = BinaryImage::from_ascii(
            "
            #...#
            #...#
            #####
            ",
        );
        let map = label_components(&img);
        assert_eq!(map.count, 1);
        assert!(map.labels.iter().all(|&l| l <= 1));
    }

    #[test]
    fn holes() {
        let disk = BinaryImage::from_ascii(".###.\n#####\n#####\n.###.");
        assert_eq!(count_holes(&disk), 0);
        let ring = BinaryImage::from_ascii(
            "
            .###.
            #...#
            #...#
            .###.
            ",
        );
        assert_eq!(count_holes(&ring), 1);
        // A diagonal gap lets the hole leak: background is 4-connected, so it
        // does not leak through the corner here.
        let corner = BinaryImage::from_ascii("###\n#.#\n##.");
        assert_eq!(count_holes(&corner), 1);
        let two = BinaryImage::from_ascii("#####\n#.#.#\n#####");
        assert_eq!(count_holes(&two), 2);
    }

    #[test]
    fn isolation() {
        let img = BinaryImage::from_ascii("....\n.##.\n....");
        assert!(!is_isolated(&img, 1, 1).unwrap());
        assert!(matches!(
            is_isolated(&img, 4, 0),
            Err(crate::error::Error::OutOfBounds { .. })
        ));
        assert!(!all_isolated(&img));
        assert!(all_isolated(&BinaryImage::from_ascii("#.#\n...\n#.#")));
    }

    #[test]
    fn exhaustive_4x4_matches_flood_fill() {
        for bits in 0u64..(1 << 16) {
            let img = BinaryImage::from_bits(4, 4, bits);
            assert_eq!(
                count_components(&img),
                flood_fill_count(&img, true, true),
                "{img:?}"
            );
            assert_eq!(count_holes(&img), flood_fill_holes(&img), "{img:?}");
        }
    }

    #[test]
    fn random_64x64_matches_flood_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..10_000 {
            let density = 0.2 + 0.4 * (i % 5) as f64 / 4.0;
            let (w, h) = if i % 10 == 0 { (64, 64) } else { (16, 16) };
            let px = (0..w * h).map(|_| rng.random_bool(density) as u8).collect();
            let img = BinaryImage::from_pixels(w, h, px).unwrap();
            assert_eq!(count_components(&img), flood_fill_count(&img, true, true));
            assert_eq!(count_holes(&img), flood_fill_holes(&img));
        }
    }

    proptest! {
        #[test]
        fn adding_a_pixel_changes_count_by_plus_one_to_minus_seven(
            bits in any::<u64>(), x in 0usize..8, y in 0usize..8
        ) {
            let mut img = BinaryImage::from_bits(8, 8, bits);
            img.set(x, y, false);
            let before = count_components(&img) as i64;
            img.set(x, y, true);
            let after = count_components(&img) as i64;
            prop_assert!((-7..=1).contains(&(after - before)));
        }

        #[test]
        fn max_label_equals_count(bits in any::<u64>()) {
            let img = BinaryImage::from_bits(8, 8, bits);
            let map = label_components(&img);
            prop_assert_eq!(map.labels.iter().copied().max().unwrap_or(0) as usize, map.count);
        }
    }
}
