//! Workspace layout: board, core station, soft-material silhouette, knife.
//!
//! The scene is a 0.25 m square. A chopping board fills the bottom; the core
//! rests on it at a fixed anchor station, surrounded by soft material whose
//! outer silhouette is a fixed rectangle flush with the core's back chord.
//! The knife starts above the object and descends in 2 mm moves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::knife::KnifeGeometry;
use crate::{Real, Vec2};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// Side length of the square simulation domain, meters.
    pub domain: Real,
    /// Height of the chopping board surface.
    pub board_y: Real,
    /// World position of the core attachment point (front base line foot).
    pub anchor: Vec2,
    /// Soft-material outer silhouette (axis-aligned rectangle).
    pub soft_min: Vec2,
    pub soft_max: Vec2,
    pub knife: KnifeGeometry,
    /// Gap between the object top and the initial knife tip height.
    pub start_clearance: Real,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            domain: 0.25,
            board_y: 0.03,
            anchor: Vec2::new(0.09, 0.03),
            soft_min: Vec2::new(0.048, 0.03),
            soft_max: Vec2::new(0.24, 0.18),
            knife: KnifeGeometry::default(),
            start_clearance: 0.005,
        }
    }
}

impl SceneConfig {
    /// Signed distance of the board half-plane (negative below the surface).
    pub fn board_sdf(&self, p: Vec2) -> Real {
        p.y - self.board_y
    }

    pub fn soft_contains(&self, p: Vec2) -> bool {
        p.x >= self.soft_min.x
            && p.x <= self.soft_max.x
            && p.y >= self.soft_min.y
            && p.y <= self.soft_max.y
    }

    /// Area of the outer silhouette (core not subtracted).
    pub fn silhouette_area(&self) -> Real {
        (self.soft_max.x - self.soft_min.x) * (self.soft_max.y - self.soft_min.y)
    }

    /// Knife tip height at the start of an episode.
    pub fn start_y(&self) -> Real {
        self.soft_max.y + self.start_clearance
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.domain > 0.0) {
            return Err(Error::InvalidConfig("domain must be positive".into()));
        }
        if self.board_y <= 0.0 || self.board_y >= self.domain {
            return Err(Error::InvalidConfig("board_y must sit inside the domain".into()));
        }
        if (self.anchor.y - self.board_y).abs() > 1e-12 {
            return Err(Error::InvalidConfig("anchor must sit on the board".into()));
        }
        if self.soft_min.x >= self.soft_max.x || self.soft_min.y >= self.soft_max.y {
            return Err(Error::InvalidConfig("soft silhouette is empty".into()));
        }
        if self.soft_max.x >= self.domain || self.soft_max.y >= self.domain {
            return Err(Error::InvalidConfig("soft silhouette must fit inside the domain".into()));
        }
        if self.knife.blade_length <= 0.0 || self.knife.half_thickness <= 0.0 {
            return Err(Error::InvalidConfig("degenerate knife geometry".into()));
        }
        Ok(())
    }
}
