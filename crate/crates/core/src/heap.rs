//! Addressable binary min-heap over edges, with decrease-key.
//!
//! Entries are ordered by `(priority, edge)`; the edge component breaks
//! priority ties deterministically. All operations are `O(log n)`.

use std::collections::HashMap;

use crate::model::EdgeId;
use crate::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct EdgeMinHeap {
    entries: Vec<(f64, EdgeId)>,
    index: HashMap<EdgeId, usize>,
}

impl EdgeMinHeap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, e: &EdgeId) -> bool {
        self.index.contains_key(e)
    }

    pub fn priority_of(&self, e: &EdgeId) -> Option<f64> {
        self.index.get(e).map(|&pos| self.entries[pos].0)
    }

    pub fn peek(&self) -> Option<(f64, EdgeId)> {
        self.entries.first().copied()
    }

    pub fn push(&mut self, e: EdgeId, priority: f64) -> Result<()> {
        assert!(priority.is_finite(), "heap priorities must be finite");
        if self.index.contains_key(&e) {
            return Err(Error::Config(format!("edge {e} already in priority queue")));
        }
        let pos = self.entries.len();
        self.entries.push((priority, e));
        self.index.insert(e, pos);
        self.sift_up(pos);
        Ok(())
    }

    pub fn pop(&mut self) -> Option<(f64, EdgeId)> {
        if self.entries.is_empty() {
            return None;
        }
        let last = self.entries.len() - 1;
        self.entries.swap(0, last);
        let (priority, e) = self.entries.pop().unwrap();
        self.index.remove(&e);
        if !self.entries.is_empty() {
            self.index.insert(self.entries[0].1, 0);
            self.sift_down(0);
        }
        Some((priority, e))
    }

    /// Lower the priority of an edge already in the heap.
    pub fn decrease_key(&mut self, e: &EdgeId, priority: f64) -> Result<()> {
        assert!(priority.is_finite(), "heap priorities must be finite");
        let pos = *self
            .index
            .get(e)
            .ok_or_else(|| Error::Config(format!("edge {e} not in priority queue")))?;
        if priority > self.entries[pos].0 {
            return Err(Error::Config(format!(
                "decrease-key on {e} would raise priority"
            )));
        }
        self.entries[pos].0 = priority;
        self.sift_up(pos);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, EdgeId)> + '_ {
        self.entries.iter().copied()
    }

    fn less(&self, a: usize, b: usize) -> bool {
        let (pa, ea) = self.entries[a];
        let (pb, eb) = self.entries[b];
        pa < pb || (pa == pb && ea < eb)
    }

    fn sift_up(&mut self, mut pos: usize) {
        while pos > 0 {
            let parent = (pos - 1) / 2;
            if !self.less(pos, parent) {
                break;
            }
            self.swap(pos, parent);
            pos = parent;
        }
    }

    fn sift_down(&mut self, mut pos: usize) {
        loop {
            let mut smallest = pos;
            for child in [2 * pos + 1, 2 * pos + 2] {
                if child < self.entries.len() && self.less(child, smallest) {
                    smallest = child;
                }
            }
            if smallest == pos {
                break;
            }
            self.swap(pos, smallest);
            pos = smallest;
        }
    }

    fn swap(&mut self, a: usize, b: usize) {
        self.entries.swap(a, b);
        self.index.insert(self.entries[a].1, a);
        self.index.insert(self.entries[b].1, b);
    }
}
