use std::collections::{HashMap, HashSet};

use super::{Element, Tensor};
use crate::error::{Error, Result};

/// One executed operation (or leaf) in a [`ComputationRecord`].
#[derive(Clone, Debug)]
pub struct RecordEntry {
    pub id: usize,
    pub op: &'static str,
    pub inputs: Vec<usize>,
}

/// Operations reachable from an output, in topological order: every entry
/// appears after all of its inputs. Only nodes on a gradient path are kept.
pub struct ComputationRecord<T: Element> {
    nodes: Vec<Tensor<T>>,
}

impl<T: Element> ComputationRecord<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn entries(&self) -> Vec<RecordEntry> {
        self.nodes
            .iter()
            .map(|t| RecordEntry {
                id: t.id(),
                op: t.grad_fn().map_or("leaf", |g| g.name),
                inputs: t
                    .grad_fn()
                    .map(|g| {
                        g.parents
                            .iter()
                            .filter(|p| p.is_requires_grad())
                            .map(|p| p.id())
                            .collect()
                    })
                    .unwrap_or_default(),
            })
            .collect()
    }
}

impl<T: Element> Tensor<T> {
    pub fn computation_record(&self) -> ComputationRecord<T> {
        let mut order = Vec::new();
        if !self.is_requires_grad() {
            return ComputationRecord { nodes: order };
        }
        let mut visited: HashSet<usize> = HashSet::new();
        // Iterative post-order DFS; the bool marks "children already pushed".
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(g) = t.grad_fn() {
                for p in g.parents.iter().rev() {
                    if p.is_requires_grad() && !visited.contains(&p.id()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        ComputationRecord { nodes: order }
    }

    /// Back-propagates from a scalar loss. Gradients are added to the
    /// `grad` buffers of every leaf that requires one; repeated calls keep
    /// accumulating until [`Tensor::zero_grad`].
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape().to_vec()));
        }
        if !self.is_requires_grad() {
            return Err(Error::DisconnectedGraph);
        }
        let record = self.computation_record();
        let mut grads: HashMap<usize, Vec<T>> = HashMap::with_capacity(record.len());
        grads.insert(self.id(), vec![T::one()]);

        for node in record.nodes.iter().rev() {
            let Some(g) = grads.remove(&node.id()) else {
                continue;
            };
            match node.grad_fn() {
                None => node.accumulate_grad(&g),
                Some(f) => {
                    let parent_grads = (f.backward)(&g);
                    debug_assert_eq!(parent_grads.len(), f.parents.len(), "{}", f.name);
                    for (p, pg) in f.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !p.is_requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), p.numel(), "{}: gradient size", f.name);
                        match grads.get_mut(&p.id()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a += b),
                            None => {
                                grads.insert(p.id(), pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
