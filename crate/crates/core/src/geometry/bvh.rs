//! Bounding volume hierarchy for nearest-primitive queries.

use super::mesh::Aabb;
use crate::Vec3;

const LEAF_SIZE: usize = 4;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, count: usize },
    Inner { left: usize, right: usize },
}

#[derive(Clone, Debug)]
pub(crate) struct Bvh {
    nodes: Vec<(Aabb, Node)>,
    order: Vec<usize>,
}

/// Result of a nearest query: primitive index, distance and tie rank.
#[derive(Copy, Clone, Debug)]
pub(crate) struct Nearest {
    pub index: usize,
    pub distance: f64,
    pub rank: u8,
}

impl Bvh {
    pub fn new(boxes: &[Aabb]) -> Self {
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * boxes.len() / LEAF_SIZE + 1),
            order: (0..boxes.len()).collect(),
        };
        if !boxes.is_empty() {
            let centers: Vec<Vec3> = boxes.iter().map(Aabb::center).collect();
            bvh.build(boxes, &centers, 0, boxes.len());
        }
        bvh
    }

    fn build(&mut self, boxes: &[Aabb], centers: &[Vec3], start: usize, end: usize) -> usize {
        let bounds = self.order[start..end]
            .iter()
            .fold(Aabb::empty(), |b, &i| b.union(&boxes[i]));
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push((
                bounds,
                Node::Leaf {
                    start,
                    count: end - start,
                },
            ));
            return id;
        }
        let centroid_bounds = Aabb::from_points(self.order[start..end].iter().map(|&i| &centers[i]));
        let axis = centroid_bounds.longest_axis();
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centers[a][axis]
                .total_cmp(&centers[b][axis])
                .then(a.cmp(&b))
        });
        self.nodes.push((bounds, Node::Leaf { start: 0, count: 0 }));
        let left = self.build(boxes, centers, start, mid);
        let right = self.build(boxes, centers, mid, end);
        self.nodes[id].1 = Node::Inner { left, right };
        id
    }

    /// Finds the primitive minimising `eval(index).0`. Candidates whose
    /// distances differ by at most `tie` are ordered by the lower rank, then
    /// by the lower index, so the answer does not depend on traversal order.
    pub fn nearest<F>(&self, p: &Vec3, tie: f64, mut eval: F) -> Option<Nearest>
    where
        F: FnMut(usize) -> (f64, u8),
    {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<Nearest> = None;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let (bounds, node) = &self.nodes[id];
            if let Some(b) = &best {
                let limit = b.distance + tie;
                if bounds.distance_sq(p) > limit * limit {
                    continue;
                }
            }
            match *node {
                Node::Leaf { start, count } => {
                    for &index in &self.order[start..start + count] {
                        let (distance, rank) = eval(index);
                        let candidate = Nearest {
                            index,
                            distance,
                            rank,
                        };
                        best = Some(match best {
                            None => candidate,
                            Some(b) => better(candidate, b, tie),
                        });
                    }
                }
                Node::Inner { left, right } => {
                    let dl = self.nodes[left].0.distance_sq(p);
                    let dr = self.nodes[right].0.distance_sq(p);
                    // Push the farther child first so the nearer one is visited next.
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best
    }
}

fn better(a: Nearest, b: Nearest, tie: f64) -> Nearest {
    if (a.distance - b.distance).abs() <= tie {
        let ka = (a.rank, a.index);
        let kb = (b.rank, b.index);
        let pick = if ka < kb { a } else { b };
        Nearest {
            distance: a.distance.min(b.distance),
            ..pick
        }
    } else if a.distance < b.distance {
        a
    } else {
        b
    }
}
