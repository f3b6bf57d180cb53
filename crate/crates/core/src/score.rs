use std::fmt;

/// Number of score classes (scores 2 through 9).
pub const NUM_CLASSES: usize = 8;
pub const MIN_SCORE: u8 = 2;
pub const MAX_SCORE: u8 = 9;

/// An aesthetic score label in `2..=9`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScoreClass(u8);

impl ScoreClass {
    pub fn new(score: u8) -> Option<Self> {
        (MIN_SCORE..=MAX_SCORE).contains(&score).then_some(Self(score))
    }

    /// Class for output node `index` (`score = index + 2`).
    pub fn from_index(index: usize) -> Option<Self> {
        (index < NUM_CLASSES).then(|| Self(index as u8 + MIN_SCORE))
    }

    pub fn score(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        (self.0 - MIN_SCORE) as usize
    }

    pub fn all() -> impl Iterator<Item = ScoreClass> {
        (MIN_SCORE..=MAX_SCORE).map(ScoreClass)
    }
}

impl fmt::Display for ScoreClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
