use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest characteristic radius a generated object may have, in pixels.
pub const MIN_SIZE: f64 = 3.0;
/// Largest count the classifiers distinguish.
pub const MAX_COUNT: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ShapeKind {
    Circle,
    /// Regular polygon inscribed in the object's radius.
    RegularPolygon {
        sides: u8,
    },
    /// Star-shaped (hence simple) polygon; vertices are relative to the centre
    /// with the circumradius normalized to at most 1.
    SimplePolygon {
        vertices: Vec<[f64; 2]>,
    },
    /// Annulus of fixed thickness; always drawn as a band.
    Ring,
}

impl ShapeKind {
    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::RegularPolygon { .. } => "regular_polygon",
            ShapeKind::SimplePolygon { .. } => "simple_polygon",
            ShapeKind::Ring => "ring",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Style {
    Solid,
    Outline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    WhiteOnBlack,
    BlackOnWhite,
}

impl Polarity {
    pub fn flipped(self) -> Self {
        match self {
            Polarity::WhiteOnBlack => Polarity::BlackOnWhite,
            Polarity::BlackOnWhite => Polarity::WhiteOnBlack,
        }
    }

    /// Pixel value of the object ink.
    pub fn ink(self) -> bool {
        self == Polarity::WhiteOnBlack
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub kind: ShapeKind,
    /// Characteristic (circumscribed) radius in pixels.
    pub size: f64,
    /// Continuous image coordinates; pixel (i, j) covers [i, i+1) x [j, j+1).
    pub center: [f64; 2],
    pub rotation: f64,
    pub style: Style,
    pub polarity: Polarity,
}

impl ObjectSpec {
    pub fn circle(center: [f64; 2], radius: f64) -> Self {
        Self {
            kind: ShapeKind::Circle,
            size: radius,
            center,
            rotation: 0.0,
            style: Style::Solid,
            polarity: Polarity::WhiteOnBlack,
        }
    }

    pub fn with_kind(mut self, kind: ShapeKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_style(mut self, style: Style) -> Self {
        self.style = style;
        self
    }

    pub fn is_solid_circle(&self) -> bool {
        self.kind == ShapeKind::Circle && self.style == Style::Solid
    }

    /// Solid area for circles: pi r^2.
    pub fn disk_area(&self) -> f64 {
        std::f64::consts::PI * self.size * self.size
    }

    /// True when the drawn object encloses background.
    pub fn has_hole_by_design(&self) -> bool {
        self.kind == ShapeKind::Ring || self.style == Style::Outline
    }
}

/// Declarative description of one stimulus image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub label: u8,
    pub objects: Vec<ObjectSpec>,
    pub image_size: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn count(&self) -> usize {
        self.objects.len()
    }

    /// Background polarity: that of the first object (white-on-black when empty).
    pub fn polarity(&self) -> Polarity {
        self.objects
            .first()
            .map(|o| o.polarity)
            .unwrap_or(Polarity::WhiteOnBlack)
    }

    pub fn total_disk_area(&self) -> f64 {
        self.objects.iter().map(ObjectSpec::disk_area).sum()
    }

    pub fn sizes(&self) -> Vec<f64> {
        self.objects.iter().map(|o| o.size).collect()
    }

    /// Checks label/count agreement and the placement constraints.
    pub fn validate(&self, layout: &Layout) -> Result<()> {
        if !(1..=MAX_COUNT as u8).contains(&self.label) {
            return Err(Error::InvalidScene(format!(
                "label {} outside 1..={MAX_COUNT}",
                self.label
            )));
        }
        if self.objects.len() != self.label as usize {
            return Err(Error::InvalidScene(format!(
                "label {} but {} objects",
                self.label,
                self.objects.len()
            )));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if !o.size.is_finite() || o.size <= 0.0 {
                return Err(Error::InvalidScene(format!(
                    "object {i} has size {}",
                    o.size
                )));
            }
            if !layout.inside(self.image_size, o.center, o.size) {
                return Err(Error::InvalidScene(format!(
                    "object {i} at {:?} r={:.2} leaves the margin",
                    o.center, o.size
                )));
            }
            for (j, p) in self.objects.iter().enumerate().skip(i + 1) {
                if !layout.separated(o.center, o.size, p.center, p.size) {
                    return Err(Error::InvalidScene(format!(
                        "objects {i} and {j} too close"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Geometric placement constraints, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    /// Minimum gap between an object's bounding circle and the image edge.
    pub margin: f64,
    /// Minimum gap between the bounding circles of two objects.
    pub separation: f64,
}

impl Default for Layout {
    fn default() -> Self {
        // A gap of 3 between bounding circles keeps pixel centres of
        // different objects at least 3 apart, so never 8-adjacent.
        Self {
            margin: 2.0,
            separation: 3.0,
        }
    }
}

impl Layout {
    pub fn inside(&self, image_size: usize, center: [f64; 2], r: f64) -> bool {
        let lim = image_size as f64 - self.margin;
        center.iter().all(|&c| c - r >= self.margin && c + r <= lim)
    }

    pub fn separated(&self, a: [f64; 2], ra: f64, b: [f64; 2], rb: f64) -> bool {
        let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        d >= ra + rb + self.separation
    }

    /// Largest radius that fits the image at all.
    pub fn max_radius(&self, image_size: usize) -> f64 {
        (image_size as f64 - 2.0 * self.margin) / 2.0
    }
}
