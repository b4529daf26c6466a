//! IIIF Image API URLs: `{base}/{region}/{size}/{rotation}/{quality}.{format}`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CanvasRecord, CorpusError};

/// Integer pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl PixelBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    /// The box edge that falls outside a `width`×`height` canvas, if any.
    pub fn crossed_edge(&self, width: u32, height: u32) -> Option<Edge> {
        if self.w == 0 || self.h == 0 {
            Some(Edge::Degenerate)
        } else if self.x as u64 + self.w as u64 > width as u64 {
            Some(Edge::Right)
        } else if self.y as u64 + self.h as u64 > height as u64 {
            Some(Edge::Bottom)
        } else {
            None
        }
    }
}

impl fmt::Display for PixelBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Right,
    Bottom,
    /// Zero width or height.
    Degenerate,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Edge::Right => "right",
            Edge::Bottom => "bottom",
            Edge::Degenerate => "zero-size",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Full,
    Box(PixelBox),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Size {
    #[default]
    Full,
    /// Scale down to at most this many pixels wide (`w,`).
    MaxWidth(u32),
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Full => f.write_str("full"),
            Region::Box(b) => b.fmt(f),
        }
    }
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Size::Full => f.write_str("full"),
            Size::MaxWidth(w) => write!(f, "{w},"),
        }
    }
}

pub fn build_image_url(record: &CanvasRecord, region: Region, size: Size) -> Result<String, CorpusError> {
    if let Region::Box(b) = region {
        if let Some(edge) = b.crossed_edge(record.width_px, record.height_px) {
            return Err(CorpusError::Bounds {
                canvas: record.canvas_uri.clone(),
                region: b.to_string(),
                edge,
                width: record.width_px,
                height: record.height_px,
            });
        }
    }
    Ok(format!("{}/{region}/{size}/0/default.jpg", record.image_service_base))
}

/// Parses a region segment: `full` or `x,y,w,h`.
pub fn parse_region(segment: &str) -> Result<Region, CorpusError> {
    if segment == "full" {
        return Ok(Region::Full);
    }
    let parts: Vec<u32> = segment
        .split(',')
        .map(|p| p.parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|_| CorpusError::Region(segment.to_string()))?;
    match parts[..] {
        [x, y, w, h] => Ok(Region::Box(PixelBox { x, y, w, h })),
        _ => Err(CorpusError::Region(segment.to_string())),
    }
}

/// Recovers the region of an Image API URL built by [`build_image_url`].
pub fn region_of_url(url: &str) -> Result<Region, CorpusError> {
    let segments: Vec<&str> = url.rsplitn(5, '/').collect();
    match segments.get(3) {
        Some(region) if segments.len() == 5 => parse_region(region),
        _ => Err(CorpusError::Region(url.to_string())),
    }
}
