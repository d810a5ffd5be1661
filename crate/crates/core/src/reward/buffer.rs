/// Bounded FIFO of (features, backed-up return) pairs stored in one flat
/// ring so recording never allocates.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceBuffer {
    dim: usize,
    capacity: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
    head: usize,
    len: usize,
}

pub const DEFAULT_CAPACITY: usize = 10_000;

impl ExperienceBuffer {
    pub fn new(dim: usize, capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            dim,
            capacity,
            features: Vec::new(),
            targets: Vec::new(),
            head: 0,
            len: 0,
        }
    }

    pub fn with_default_capacity(dim: usize) -> Self {
        Self::new(dim, DEFAULT_CAPACITY)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Appends, evicting the oldest example when full. Examples with a
    /// non-finite value or the wrong width are rejected (returns false).
    pub fn record(&mut self, features: &[f64], target: f64) -> bool {
        if features.len() != self.dim
            || !target.is_finite()
            || !features.iter().all(|v| v.is_finite())
        {
            return false;
        }
        if self.targets.len() < self.capacity {
            self.features.extend_from_slice(features);
            self.targets.push(target);
        } else {
            let slot = (self.head + self.len) % self.capacity;
            self.features[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(features);
            self.targets[slot] = target;
        }
        if self.len == self.capacity {
            self.head = (self.head + 1) % self.capacity;
        } else {
            self.len += 1;
        }
        true
    }

    /// `i`-th example in insertion order (0 = oldest).
    pub fn get(&self, i: usize) -> (&[f64], f64) {
        assert!(i < self.len);
        let slot = (self.head + i) % self.capacity;
        (
            &self.features[slot * self.dim..(slot + 1) * self.dim],
            self.targets[slot],
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn clear(&mut self) {
        self.features.clear();
        self.targets.clear();
        self.head = 0;
        self.len = 0;
    }
}
