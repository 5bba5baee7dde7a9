//! Axis-aligned bounding-volume hierarchy over arbitrary primitives.

use super::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Aabb {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points(points: &[Vec3]) -> Self {
        points.iter().fold(Self::empty(), |mut b, p| {
            b.grow(p);
            b
        })
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            lo: self.lo.inf(&other.lo),
            hi: self.hi.sup(&other.hi),
        }
    }

    pub fn centroid(&self) -> Vec3 {
        (self.lo + self.hi) * 0.5
    }

    /// Squared distance from `p` to the box; zero inside.
    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let excess = if p[k] < self.lo[k] {
                self.lo[k] - p[k]
            } else if p[k] > self.hi[k] {
                p[k] - self.hi[k]
            } else {
                0.0
            };
            d += excess * excess;
        }
        d
    }

    /// Closed-interval overlap test, so touching boxes overlap.
    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.lo[k] <= other.hi[k] && other.lo[k] <= self.hi[k])
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        bounds: Aabb,
        start: usize,
        end: usize,
    },
    Inner {
        bounds: Aabb,
        left: usize,
        right: usize,
    },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 4;

// Box distances and triangle distances are rounded differently; pruning only
// beyond this relative margin keeps the query identical to a linear scan.
const PRUNE_SLACK: f64 = 1.0 + 1e-9;

#[derive(Debug, Clone)]
pub(crate) struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
    boxes: Vec<Aabb>,
}

impl Bvh {
    pub fn build(boxes: Vec<Aabb>) -> Self {
        let mut order: Vec<usize> = (0..boxes.len()).collect();
        let centroids: Vec<Vec3> = boxes.iter().map(Aabb::centroid).collect();
        let mut nodes = Vec::with_capacity(2 * boxes.len() / LEAF_SIZE + 1);
        if !boxes.is_empty() {
            build_node(&mut nodes, &mut order, 0, boxes.len(), &boxes, &centroids);
        }
        Self {
            nodes,
            order,
            boxes,
        }
    }

    /// Exact nearest primitive under `dist_sq`, which must be bounded below by
    /// the squared box distance. Ties go to the smallest primitive id.
    pub fn nearest<T>(
        &self,
        p: &Vec3,
        mut dist_sq: impl FnMut(usize) -> (f64, T),
    ) -> Option<(usize, f64, T)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, f64, T)> = None;
        let mut stack = vec![(0usize, self.nodes[0].bounds().distance_squared(p))];
        while let Some((ni, box_d)) = stack.pop() {
            if let Some((_, bd, _)) = &best {
                if box_d > *bd * PRUNE_SLACK {
                    continue;
                }
            }
            match &self.nodes[ni] {
                Node::Leaf { start, end, .. } => {
                    for &prim in &self.order[*start..*end] {
                        let (d, payload) = dist_sq(prim);
                        let better = match &best {
                            None => true,
                            Some((bi, bd, _)) => d < *bd || (d == *bd && prim < *bi),
                        };
                        if better {
                            best = Some((prim, d, payload));
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bounds().distance_squared(p);
                    let dr = self.nodes[*right].bounds().distance_squared(p);
                    // visit the closer child first
                    if dl <= dr {
                        stack.push((*right, dr));
                        stack.push((*left, dl));
                    } else {
                        stack.push((*left, dl));
                        stack.push((*right, dr));
                    }
                }
            }
        }
        best
    }

    /// Calls `visit` for every primitive whose box overlaps `query`.
    pub fn for_each_overlap(&self, query: &Aabb, mut visit: impl FnMut(usize)) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if !node.bounds().overlaps(query) {
                continue;
            }
            match node {
                Node::Leaf { start, end, .. } => {
                    for &prim in &self.order[*start..*end] {
                        if self.boxes[prim].overlaps(query) {
                            visit(prim);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    start: usize,
    end: usize,
    boxes: &[Aabb],
    centroids: &[Vec3],
) -> usize {
    let bounds = order[start..end]
        .iter()
        .fold(Aabb::empty(), |b, &i| b.merge(&boxes[i]));
    let index = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return index;
    }

    let mut cbox = Aabb::empty();
    for &i in &order[start..end] {
        cbox.grow(&centroids[i]);
    }
    let extent = cbox.hi - cbox.lo;
    let axis = extent.imax();
    if extent[axis] <= 0.0 {
        // all centroids coincide; splitting cannot separate them
        nodes.push(Node::Leaf { bounds, start, end });
        return index;
    }

    let mid = start + (end - start) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });

    nodes.push(Node::Leaf { bounds, start, end });
    let left = build_node(nodes, order, start, mid, boxes, centroids);
    let right = build_node(nodes, order, mid, end, boxes, centroids);
    nodes[index] = Node::Inner {
        bounds,
        left,
        right,
    };
    index
}
