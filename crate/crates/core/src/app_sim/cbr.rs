use serde::{Deserialize, Serialize};

/// Constant-bit-rate arrivals with an exact fractional carry: over `n` TTIs
/// the total is `floor(n * rate_bps / 8000)` bytes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CbrSource {
    rate_bps: u64,
    /// Pending bits times 1000, always below 8000.
    carry: u64,
}

impl CbrSource {
    pub fn new(rate_bps: u64) -> Self {
        CbrSource { rate_bps, carry: 0 }
    }

    pub fn rate_bps(&self) -> u64 {
        self.rate_bps
    }

    /// Bytes arriving in the next TTI.
    pub fn arrivals(&mut self) -> u64 {
        let acc = self.carry + self.rate_bps;
        self.carry = acc % 8000;
        acc / 8000
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_rates() {
        let mut s = CbrSource::new(35_000_000);
        let total: u64 = (0..10_000).map(|_| s.arrivals()).sum();
        assert_eq!(total, 43_750_000);
        let mut s = CbrSource::new(10_000_000);
        assert!((0..100).all(|_| s.arrivals() == 1250));
        let mut s = CbrSource::new(0);
        assert!((0..100).all(|_| s.arrivals() == 0));
    }

    #[test]
    fn fractional_rate_carries() {
        let mut s = CbrSource::new(12_345);
        let v: Vec<u64> = (0..8000).map(|_| s.arrivals()).collect();
        assert_eq!(v.iter().sum::<u64>(), 12_345);
        assert!(v.iter().all(|&b| b <= 2));
    }
}
