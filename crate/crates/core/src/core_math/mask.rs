use crate::error::{Error, Result};

/// Valid frame counts for a padded batch. Frames `t >= valid_lengths[i]`
/// of item `i` are padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeMask {
    max_time: usize,
    valid_lengths: Vec<usize>,
}

impl TimeMask {
    pub fn new(max_time: usize, valid_lengths: Vec<usize>) -> Result<Self> {
        if valid_lengths.is_empty() {
            return Err(Error::Precondition("time mask over an empty batch".into()));
        }
        if let Some(bad) = valid_lengths.iter().find(|&&l| l == 0 || l > max_time) {
            return Err(Error::Precondition(format!(
                "valid length {bad} outside [1, {max_time}]"
            )));
        }
        Ok(Self {
            max_time,
            valid_lengths,
        })
    }

    /// Every item uses all `max_time` frames.
    pub fn full(batch: usize, max_time: usize) -> Result<Self> {
        Self::new(max_time, vec![max_time; batch])
    }

    pub fn batch(&self) -> usize {
        self.valid_lengths.len()
    }

    pub fn max_time(&self) -> usize {
        self.max_time
    }

    pub fn valid_lengths(&self) -> &[usize] {
        &self.valid_lengths
    }

    pub fn len_of(&self, item: usize) -> usize {
        self.valid_lengths[item]
    }

    pub fn is_valid(&self, item: usize, t: usize) -> bool {
        t < self.valid_lengths[item]
    }

    /// Same valid lengths over a longer padded time axis.
    pub fn with_max_time(&self, max_time: usize) -> Result<Self> {
        Self::new(max_time, self.valid_lengths.clone())
    }

    pub fn total_valid(&self) -> usize {
        self.valid_lengths.iter().sum()
    }
}
