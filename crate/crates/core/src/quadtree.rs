//! Quadtree over 2-D positions for Barnes-Hut repulsion.

use rayon::prelude::*;

use crate::worker::Point;

const NO_CHILD: u32 = u32::MAX;
const MAX_DEPTH: u32 = 48;

#[derive(Clone, Debug)]
pub struct Cell {
    pub center: Point,
    pub half_width: f64,
    pub mass_center: Point,
    pub count: usize,
    children: [u32; 4],
    points: Vec<u32>,
    depth: u32,
}

impl Cell {
    fn new(center: Point, half_width: f64, depth: u32) -> Self {
        Cell {
            center,
            half_width,
            mass_center: [0.0, 0.0],
            count: 0,
            children: [NO_CHILD; 4],
            points: Vec::new(),
            depth,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children[0] == NO_CHILD
    }

    pub fn width(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn points(&self) -> impl Iterator<Item = usize> + '_ {
        self.points.iter().map(|&p| p as usize)
    }

    fn contains(&self, p: Point) -> bool {
        (p[0] - self.center[0]).abs() <= self.half_width
            && (p[1] - self.center[1]).abs() <= self.half_width
    }

    fn quadrant(&self, p: Point) -> usize {
        usize::from(p[0] > self.center[0]) + 2 * usize::from(p[1] > self.center[1])
    }
}

#[derive(Clone, Debug)]
pub struct QuadTree {
    cells: Vec<Cell>,
}

impl QuadTree {
    /// Builds the tree on a square root cell covering every position. Leaves
    /// hold one point, except coincident points which share a leaf once the
    /// depth limit is hit.
    pub fn build(y: &[Point]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in y {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let half = 0.5 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let half = half * (1.0 + 1e-9) + 1e-12;
        let mut tree = QuadTree { cells: vec![Cell::new(center, half, 0)] };
        for (i, &p) in y.iter().enumerate() {
            tree.insert(i as u32, p, y);
        }
        tree.finish(y);
        tree
    }

    fn insert(&mut self, idx: u32, p: Point, y: &[Point]) {
        let mut node = 0usize;
        loop {
            self.cells[node].count += 1;
            if self.cells[node].is_leaf() {
                let cell = &self.cells[node];
                if cell.points.is_empty() || cell.depth >= MAX_DEPTH {
                    self.cells[node].points.push(idx);
                    return;
                }
                // split and push the resident point one level down
                self.subdivide(node);
                let resident = std::mem::take(&mut self.cells[node].points);
                for r in resident {
                    let q = y[r as usize];
                    let child = self.cells[node].children[self.cells[node].quadrant(q)] as usize;
                    self.cells[child].count += 1;
                    self.cells[child].points.push(r);
                }
            }
            node = self.cells[node].children[self.cells[node].quadrant(p)] as usize;
            let child = &self.cells[node];
            if child.is_leaf() && child.points.is_empty() {
                self.cells[node].count += 1;
                self.cells[node].points.push(idx);
                return;
            }
        }
    }

    fn subdivide(&mut self, node: usize) {
        let (c, h, depth) = {
            let cell = &self.cells[node];
            (cell.center, cell.half_width * 0.5, cell.depth + 1)
        };
        for q in 0..4 {
            let cx = if q & 1 == 1 { c[0] + h } else { c[0] - h };
            let cy = if q & 2 == 2 { c[1] + h } else { c[1] - h };
            self.cells[node].children[q] = self.cells.len() as u32;
            self.cells.push(Cell::new([cx, cy], h, depth));
        }
    }

    /// Centers of mass from exact sums over each cell's points.
    fn finish(&mut self, y: &[Point]) {
        let mut sums = vec![[0.0f64; 2]; self.cells.len()];
        for node in (0..self.cells.len()).rev() {
            let cell = &self.cells[node];
            let mut s = [0.0, 0.0];
            if cell.is_leaf() {
                for p in cell.points() {
                    s[0] += y[p][0];
                    s[1] += y[p][1];
                }
            } else {
                for &c in &cell.children {
                    s[0] += sums[c as usize][0];
                    s[1] += sums[c as usize][1];
                }
            }
            sums[node] = s;
            let n = cell.count as f64;
            if cell.count > 0 {
                self.cells[node].mass_center = [s[0] / n, s[1] / n];
            }
        }
    }

    pub fn root(&self) -> &Cell {
        &self.cells[0]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn children(&self, cell: &Cell) -> impl Iterator<Item = &Cell> {
        let kids = cell.children;
        kids.into_iter().filter(|&c| c != NO_CHILD).map(move |c| &self.cells[c as usize])
    }

    /// Unnormalized repulsion on point `i` and its share of the partition
    /// function: `sum_j w_ij^2 (y_i - y_j)` and `sum_j w_ij` with
    /// `w_ij = 1 / (1 + |y_i - y_j|^2)`. A cell is summarized by its center of
    /// mass when `width / distance < theta` and it does not contain `y_i`.
    pub fn repulsion(&self, i: usize, y: &[Point], theta: f64) -> (Point, f64) {
        let yi = y[i];
        let mut force = [0.0, 0.0];
        let mut z = 0.0;
        let mut stack = vec![0u32];
        let theta2 = theta * theta;
        while let Some(node) = stack.pop() {
            let cell = &self.cells[node as usize];
            if cell.count == 0 {
                continue;
            }
            if cell.is_leaf() {
                for j in cell.points() {
                    if j == i {
                        continue;
                    }
                    let dx = yi[0] - y[j][0];
                    let dy = yi[1] - y[j][1];
                    let w = 1.0 / (1.0 + dx * dx + dy * dy);
                    z += w;
                    force[0] += w * w * dx;
                    force[1] += w * w * dy;
                }
                continue;
            }
            let dx = yi[0] - cell.mass_center[0];
            let dy = yi[1] - cell.mass_center[1];
            let d2 = dx * dx + dy * dy;
            let width = cell.width();
            if width * width < theta2 * d2 && !cell.contains(yi) {
                let w = 1.0 / (1.0 + d2);
                let m = cell.count as f64;
                z += m * w;
                force[0] += m * w * w * dx;
                force[1] += m * w * w * dy;
            } else {
                // reverse so children are visited in quadrant order
                for &c in cell.children.iter().rev() {
                    stack.push(c);
                }
            }
        }
        (force, z)
    }

    /// Repulsion for every point plus the partition function estimate
    /// `Z = sum_i z_i`, summed in point order.
    pub fn repulsive_forces(&self, y: &[Point], theta: f64) -> (Vec<Point>, f64) {
        let per: Vec<(Point, f64)> =
            (0..y.len()).into_par_iter().map(|i| self.repulsion(i, y, theta)).collect();
        let z = per.iter().map(|&(_, z)| z).sum();
        (per.into_iter().map(|(f, _)| f).collect(), z)
    }
}
