/// Pixels of clearance required between a valid pixel and the nearest land.
pub const COAST_BUFFER_PX: usize = 2;

/// Ocean pixels whose Chebyshev distance to every land pixel exceeds
/// `buffer_px`. Row-major `height x width`.
pub fn coast_mask(land: &[bool], height: usize, width: usize, buffer_px: usize) -> Vec<bool> {
    assert_eq!(land.len(), height * width, "land grid size");
    let mut valid = vec![true; land.len()];
    for y in 0..height {
        for x in 0..width {
            if !land[y * width + x] {
                continue;
            }
            let (y0, y1) = (y.saturating_sub(buffer_px), (y + buffer_px).min(height - 1));
            let (x0, x1) = (x.saturating_sub(buffer_px), (x + buffer_px).min(width - 1));
            for yy in y0..=y1 {
                valid[yy * width + x0..=yy * width + x1].fill(false);
            }
        }
    }
    valid
}
