use super::SeamLayout;
use crate::error::{BlendError, Result};
use crate::model::Mask;

/// Closed, 8-connected chain of a region's inner border pixels.
///
/// Points run counterclockwise as seen on screen (y pointing down), starting
/// from the topmost-then-leftmost border pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryChain {
    pub points: Vec<(usize, usize)>,
    pub region_index: usize,
}

impl BoundaryChain {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

// Clockwise on screen, starting west.
const DIRS: [(isize, isize); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

fn dir_index(dx: isize, dy: isize) -> usize {
    DIRS.iter()
        .position(|&d| d == (dx, dy))
        .expect("neighbouring pixels")
}

/// Traces the border of trimmed region `region_index`.
pub fn extract_boundary(layout: &SeamLayout, region_index: usize) -> Result<BoundaryChain> {
    let region = layout
        .trimmed_masks()
        .get(region_index)
        .ok_or(BlendError::OutOfRange {
            what: "region",
            index: region_index,
            len: layout.stream_count(),
        })?;
    trace_region(region, region_index)
}

/// Boundary tracing on an arbitrary mask; `region_index` is recorded in the chain.
pub fn trace_region(region: &Mask, region_index: usize) -> Result<BoundaryChain> {
    let w = region.width();
    let start = region
        .data()
        .iter()
        .position(|&b| b)
        .map(|p| (p % w, p / w))
        .ok_or_else(|| BlendError::structural(format!("region {region_index} is empty")))?;

    if count_components_4(region) > 1 {
        return Err(BlendError::structural(format!(
            "region {region_index} is not 4-connected"
        )));
    }
    let holes = count_holes(region);
    if holes > 0 {
        return Err(BlendError::UnsupportedTopology {
            region: region_index,
            holes,
        });
    }

    let inside = |x: isize, y: isize| region.get_signed(x, y);
    let mut clockwise = vec![start];
    let (mut cx, mut cy) = (start.0 as isize, start.1 as isize);
    // west of the first raster pixel is always outside
    let mut back = 0usize;
    let mut second: Option<(isize, isize)> = None;
    loop {
        let mut next = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let (nx, ny) = (cx + DIRS[d].0, cy + DIRS[d].1);
            if inside(nx, ny) {
                let prev = (back + k - 1) % 8;
                let (bx, by) = (cx + DIRS[prev].0, cy + DIRS[prev].1);
                next = Some(((nx, ny), dir_index(bx - nx, by - ny)));
                break;
            }
        }
        let Some(((nx, ny), nb)) = next else {
            break; // isolated pixel
        };
        if (cx, cy) == (start.0 as isize, start.1 as isize) {
            match second {
                None => second = Some((nx, ny)),
                Some(s) if s == (nx, ny) => break,
                Some(_) => {}
            }
        }
        if (nx, ny) != (start.0 as isize, start.1 as isize) {
            clockwise.push((nx as usize, ny as usize));
        }
        cx = nx;
        cy = ny;
        back = nb;
    }

    if clockwise.len() < 3 {
        return Err(BlendError::structural(format!(
            "region {region_index} boundary has only {} point(s)",
            clockwise.len()
        )));
    }
    let mut points = Vec::with_capacity(clockwise.len());
    points.push(clockwise[0]);
    points.extend(clockwise[1..].iter().rev());
    Ok(BoundaryChain {
        points,
        region_index,
    })
}

fn count_components_4(region: &Mask) -> usize {
    let (w, h) = region.dims();
    let mut seen = vec![false; w * h];
    let mut count = 0;
    let mut stack = Vec::new();
    for p in 0..w * h {
        if !region.data()[p] || seen[p] {
            continue;
        }
        count += 1;
        seen[p] = true;
        stack.push(p);
        while let Some(q) = stack.pop() {
            let (x, y) = (q % w, q / w);
            let nbrs = [
                (x.wrapping_sub(1), y),
                (x + 1, y),
                (x, y.wrapping_sub(1)),
                (x, y + 1),
            ];
            for (nx, ny) in nbrs {
                if nx < w && ny < h {
                    let r = ny * w + nx;
                    if region.data()[r] && !seen[r] {
                        seen[r] = true;
                        stack.push(r);
                    }
                }
            }
        }
    }
    count
}

/// Background components (8-connected) that do not reach the image border.
fn count_holes(region: &Mask) -> usize {
    let (w, h) = region.dims();
    // padded grid so the outside is one component
    let (pw, ph) = (w + 2, h + 2);
    let bg = |x: usize, y: usize| -> bool {
        if x == 0 || y == 0 || x == pw - 1 || y == ph - 1 {
            true
        } else {
            !region.get(x - 1, y - 1)
        }
    };
    let mut seen = vec![false; pw * ph];
    let mut stack = Vec::new();
    let mut components = 0;
    for p in 0..pw * ph {
        let (x, y) = (p % pw, p / pw);
        if seen[p] || !bg(x, y) {
            continue;
        }
        components += 1;
        seen[p] = true;
        stack.push(p);
        while let Some(q) = stack.pop() {
            let (qx, qy) = ((q % pw) as isize, (q / pw) as isize);
            for (dx, dy) in DIRS {
                let (nx, ny) = (qx + dx, qy + dy);
                if nx < 0 || ny < 0 || nx >= pw as isize || ny >= ph as isize {
                    continue;
                }
                let r = ny as usize * pw + nx as usize;
                if !seen[r] && bg(nx as usize, ny as usize) {
                    seen[r] = true;
                    stack.push(r);
                }
            }
        }
    }
    components - 1
}
