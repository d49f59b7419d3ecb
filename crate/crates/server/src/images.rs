//! On-demand crop rendering with a disk cache keyed by candidate and rect.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use framepick::ingest::cache::atomic_write;
use framepick::model::Rect;
use image::ImageFormat;
use tracing::debug;

use crate::error::{ApiError, ApiResult};

/// Cache file for one crop. The candidate id already names the aspect.
pub fn cache_path(dir: &Path, candidate_id: &str, rect: Rect) -> PathBuf {
    dir.join(format!("{candidate_id}_{}_{}_{}_{}.png", rect.x, rect.y, rect.w, rect.h))
}

/// PNG bytes of `rect` cut from `frame`, rendered once and then served
/// from `cache_dir`.
pub fn crop_png(frame: &Path, rect: Rect, cache_dir: &Path, candidate_id: &str) -> ApiResult<Vec<u8>> {
    let cached = cache_path(cache_dir, candidate_id, rect);
    if let Ok(bytes) = fs::read(&cached) {
        return Ok(bytes);
    }
    let img = image::open(frame).map_err(|e| ApiError::Internal(format!("{}: {e}", frame.display())))?;
    let r = rect
        .clamp_to(i64::from(img.width()), i64::from(img.height()))
        .ok_or_else(|| ApiError::Internal(format!("crop {rect} lies outside {}", frame.display())))?;
    let crop = img.crop_imm(r.x as u32, r.y as u32, r.w as u32, r.h as u32);
    let mut bytes = Vec::new();
    crop.to_rgb8()
        .write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    fs::create_dir_all(cache_dir)?;
    atomic_write(&cached, &bytes)?;
    debug!(path = %cached.display(), "crop rendered");
    Ok(bytes)
}
