use crate::raster::Mask;

/// Pixels of every 8-connected component of `mask`, in raster order of
/// each component's first pixel.
pub fn connected_components(mask: &Mask) -> Vec<Vec<(u32, u32)>> {
    let (w, h) = mask.dimensions();
    let mut visited = vec![false; w as usize * h as usize];
    let idx = |x: u32, y: u32| y as usize * w as usize + x as usize;
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || visited[idx(x, y)] {
                continue;
            }
            let mut comp = Vec::new();
            visited[idx(x, y)] = true;
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                comp.push((cx, cy));
                let x0 = cx.saturating_sub(1);
                let y0 = cy.saturating_sub(1);
                let x1 = (cx + 1).min(w - 1);
                let y1 = (cy + 1).min(h - 1);
                for ny in y0..=y1 {
                    for nx in x0..=x1 {
                        let i = idx(nx, ny);
                        if mask.get(nx, ny) && !visited[i] {
                            visited[i] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            out.push(comp);
        }
    }
    out
}

/// Largest 8-connected component; the earliest in raster order on ties.
pub fn largest_component(mask: &Mask) -> Option<Vec<(u32, u32)>> {
    let mut best: Option<Vec<(u32, u32)>> = None;
    for comp in connected_components(mask) {
        if best.as_ref().is_none_or(|b| comp.len() > b.len()) {
            best = Some(comp);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_neighbours_join() {
        let m = Mask::from_fn(4, 4, |x, y| x == y);
        assert_eq!(connected_components(&m).len(), 1);
        let m = Mask::from_fn(5, 1, |x, _| x % 2 == 0);
        assert_eq!(connected_components(&m).len(), 3);
    }

    #[test]
    fn components_partition_set_pixels() {
        let m = Mask::from_fn(30, 20, |x, y| (x * 7 + y * 3) % 5 < 2 && (x / 6 + y / 4) % 2 == 0);
        let comps = connected_components(&m);
        let total: usize = comps.iter().map(Vec::len).sum();
        assert_eq!(total as u64, m.count());
        let mut seen = std::collections::HashSet::new();
        for c in &comps {
            for p in c {
                assert!(seen.insert(*p));
            }
        }
    }

    #[test]
    fn empty_mask_has_no_component() {
        assert!(largest_component(&Mask::new(3, 3)).is_none());
    }
}
