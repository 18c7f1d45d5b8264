use std::ops::{Add, AddAssign};

/// How multiply-accumulates and elementwise work fold into one number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FlopConvention {
    /// One multiply-accumulate is one operation; elementwise work is ignored.
    /// This is the count produced by common profilers (thop, fvcore).
    MultiplyAccumulate,
    /// A multiply-accumulate is two operations and every elementwise
    /// operation (bias add, activation, normalization, softmax) counts once.
    Arithmetic,
}

/// Operation tally for a forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlopCount {
    pub macs: u64,
    pub elementwise: u64,
}

impl FlopCount {
    pub const fn new(macs: u64, elementwise: u64) -> Self {
        Self { macs, elementwise }
    }

    pub fn total(&self, convention: FlopConvention) -> f64 {
        match convention {
            FlopConvention::MultiplyAccumulate => self.macs as f64,
            FlopConvention::Arithmetic => 2.0 * self.macs as f64 + self.elementwise as f64,
        }
    }

    pub fn scaled(self, times: u64) -> Self {
        Self::new(self.macs * times, self.elementwise * times)
    }
}

impl Add for FlopCount {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.macs + rhs.macs, self.elementwise + rhs.elementwise)
    }
}

impl AddAssign for FlopCount {
    fn add_assign(&mut self, rhs: Self) {
        self.macs += rhs.macs;
        self.elementwise += rhs.elementwise;
    }
}

impl std::iter::Sum for FlopCount {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}
