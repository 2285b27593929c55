//! Point-sampled rasterization: a pixel is inked when its centre lies inside
//! the shape. No anti-aliasing, so every output is binary by construction.

use std::f64::consts::PI;

use super::scene::{ObjectSpec, SceneSpec, ShapeKind, Style};
use crate::error::Result;
use crate::image::BinaryImage;

/// Band width of rings and outline-style objects.
pub const BAND_THICKNESS: f64 = 2.0;

/// Renders the scene. Objects are painted in their own ink over a background
/// of the scene polarity's opposite colour.
pub fn rasterize(spec: &SceneSpec) -> Result<BinaryImage> {
    let size = spec.image_size;
    let background = !spec.polarity().ink();
    let mut img = BinaryImage::filled(size, size, background);
    for obj in &spec.objects {
        let ink = obj.polarity.ink();
        for_each_inked_pixel(obj, size, |x, y| img.set(x, y, ink));
    }
    Ok(img)
}

/// Mask of one object on a black field (1 where inked).
pub fn object_mask(obj: &ObjectSpec, image_size: usize) -> BinaryImage {
    let mut img = BinaryImage::new(image_size, image_size);
    for_each_inked_pixel(obj, image_size, |x, y| img.set(x, y, true));
    img
}

/// Scene rendered white-on-black regardless of polarity: the object mask union.
pub fn foreground(spec: &SceneSpec) -> BinaryImage {
    let size = spec.image_size;
    let mut img = BinaryImage::new(size, size);
    for obj in &spec.objects {
        for_each_inked_pixel(obj, size, |x, y| img.set(x, y, true));
    }
    img
}

/// World-space vertices for polygonal kinds, `None` for round ones.
pub fn polygon_vertices(obj: &ObjectSpec) -> Option<Vec<[f64; 2]>> {
    let (cx, cy) = (obj.center[0], obj.center[1]);
    let (s, c) = obj.rotation.sin_cos();
    let place = |u: f64, v: f64| {
        [
            cx + obj.size * (c * u - s * v),
            cy + obj.size * (s * u + c * v),
        ]
    };
    match &obj.kind {
        ShapeKind::RegularPolygon { sides } => {
            let k = *sides as usize;
            Some(
                (0..k)
                    .map(|j| {
                        let a = 2.0 * PI * j as f64 / k as f64 - PI / 2.0;
                        place(a.cos(), a.sin())
                    })
                    .collect(),
            )
        }
        ShapeKind::SimplePolygon { vertices } => {
            Some(vertices.iter().map(|v| place(v[0], v[1])).collect())
        }
        ShapeKind::Circle | ShapeKind::Ring => None,
    }
}

fn for_each_inked_pixel(obj: &ObjectSpec, image_size: usize, mut paint: impl FnMut(usize, usize)) {
    let r = obj.size;
    let lo = |c: f64| ((c - r - 1.0).floor().max(0.0)) as usize;
    let hi = |c: f64| ((c + r + 1.0).ceil().max(0.0) as usize).min(image_size);
    let (x0, x1) = (lo(obj.center[0]), hi(obj.center[0]));
    let (y0, y1) = (lo(obj.center[1]), hi(obj.center[1]));
    let polygon = polygon_vertices(obj);
    let band = matches!(obj.kind, ShapeKind::Ring) || obj.style == Style::Outline;

    for y in y0..y1 {
        for x in x0..x1 {
            let p = [x as f64 + 0.5, y as f64 + 0.5];
            let inked = match &polygon {
                None => {
                    let d =
                        ((p[0] - obj.center[0]).powi(2) + (p[1] - obj.center[1]).powi(2)).sqrt();
                    d <= r && (!band || d > r - BAND_THICKNESS)
                }
                Some(poly) => {
                    point_in_polygon(p, poly)
                        && (!band || distance_to_boundary(p, poly) < BAND_THICKNESS)
                }
            };
            if inked {
                paint(x, y);
            }
        }
    }
}

/// Even-odd crossing test.
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x_cross = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn distance_to_boundary(p: [f64; 2], poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| segment_distance(p, poly[i], poly[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - qx).powi(2) + (p[1] - qy).powi(2)).sqrt()
}

/// True when no two non-adjacent edges of the polygon intersect.
pub fn is_simple_polygon(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        let v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        }
    };
    let (d1, d2) = (orient(q1, q2, p1), orient(q1, q2, p2));
    let (d3, d4) = (orient(p1, p2, q1), orient(p1, p2, q2));
    d1 * d2 < 0 && d3 * d4 < 0
}
