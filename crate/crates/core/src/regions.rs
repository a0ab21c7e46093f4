//! Connected-component labelling on binary masks.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub area: usize,
    /// Inclusive pixel extents.
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

/// Components of `mask` (row-major, `width` wide) in raster order of their
/// first pixel.
pub fn components(mask: &[bool], width: usize, conn: Connectivity) -> Vec<Component> {
    if width == 0 {
        return Vec::new();
    }
    let height = mask.len() / width;
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    let offsets: &[(isize, isize)] = match conn {
        Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
        Connectivity::Eight => &[
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ],
    };
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut c = Component {
            area: 0,
            min_x: usize::MAX,
            min_y: usize::MAX,
            max_x: 0,
            max_y: 0,
        };
        while let Some(i) = stack.pop() {
            let (x, y) = (i % width, i / width);
            c.area += 1;
            c.min_x = c.min_x.min(x);
            c.min_y = c.min_y.min(y);
            c.max_x = c.max_x.max(x);
            c.max_y = c.max_y.max(y);
            for &(dx, dy) in offsets {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        out.push(c);
    }
    out
}

/// Largest component; the earliest in raster order wins ties.
pub fn largest(comps: &[Component]) -> Option<&Component> {
    comps.iter().fold(None, |best: Option<&Component>, c| match best {
        Some(b) if b.area >= c.area => Some(b),
        _ => Some(c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_pixels_join_only_with_eight() {
        let mask = [true, false, false, true];
        assert_eq!(components(&mask, 2, Connectivity::Four).len(), 2);
        assert_eq!(components(&mask, 2, Connectivity::Eight).len(), 1);
    }

    #[test]
    fn extents_and_largest() {
        #[rustfmt::skip]
        let mask = [
            true,  true,  false, false, false,
            false, false, false, true,  true,
            false, false, false, true,  true,
        ];
        let comps = components(&mask, 5, Connectivity::Four);
        assert_eq!(comps.len(), 2);
        let big = largest(&comps).unwrap();
        assert_eq!(big.area, 4);
        assert_eq!((big.min_x, big.min_y, big.max_x, big.max_y), (3, 1, 4, 2));
    }
}
