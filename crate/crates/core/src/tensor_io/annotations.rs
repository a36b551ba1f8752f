use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dermoscopic structure a box was drawn around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureLabel {
    ReticularNetwork,
    Globules,
    Pseudopods,
    BlueWhiteVeil,
    Vascular,
    Pseudopodial,
}

/// Half-open pixel rectangle `[x, x + w) x [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub label: StructureLabel,
}

impl AnnotationBox {
    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }
}

/// Expert bounding rectangles for one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub width: u32,
    pub height: u32,
    pub boxes: Vec<AnnotationBox>,
}

impl AnnotationSet {
    pub fn new(width: u32, height: u32, boxes: Vec<AnnotationBox>) -> Result<Self> {
        let set = Self {
            width,
            height,
            boxes,
        };
        set.validate()?;
        Ok(set)
    }

    /// Out-of-bounds boxes are an error, never silently clipped.
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::ShapeMismatch(format!(
                "annotation image size {}x{} must be positive",
                self.width, self.height
            )));
        }
        for (index, b) in self.boxes.iter().enumerate() {
            let fits_x = u64::from(b.x) + u64::from(b.w) <= u64::from(self.width);
            let fits_y = u64::from(b.y) + u64::from(b.h) <= u64::from(self.height);
            if b.w == 0 || b.h == 0 || !fits_x || !fits_y {
                return Err(Error::BoxOutOfBounds {
                    index,
                    x: b.x,
                    y: b.y,
                    w: b.w,
                    h: b.h,
                    width: self.width,
                    height: self.height,
                });
            }
        }
        Ok(())
    }
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<AnnotationSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let set: AnnotationSet = serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    set.validate()?;
    Ok(set)
}
