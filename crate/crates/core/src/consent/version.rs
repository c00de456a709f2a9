use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Dotted decimal agreement version ("1.01"), ordered segment-wise by
/// numeric value. The original spelling is kept for serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AgreementVersion {
    text: String,
    segments: Vec<u64>,
}

impl AgreementVersion {
    pub fn initial() -> Self {
        "1.00".parse().expect("valid literal")
    }

    pub fn segments(&self) -> &[u64] {
        &self.segments
    }

    pub fn is_initial(&self) -> bool {
        self == &Self::initial()
    }

    /// Increment the last segment, keeping its zero padding ("1.01" -> "1.02").
    pub fn bump(&self) -> Self {
        let (head, last) = match self.text.rfind('.') {
            Some(i) => (&self.text[..=i], &self.text[i + 1..]),
            None => ("", self.text.as_str()),
        };
        let next = last.parse::<u64>().expect("validated segment") + 1;
        format!("{head}{next:0width$}", width = last.len())
            .parse()
            .expect("bumped version is valid")
    }
}

impl FromStr for AgreementVersion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let segments = s
            .split('.')
            .map(|seg| {
                if seg.is_empty() || !seg.bytes().all(|b| b.is_ascii_digit()) {
                    Err(format!("invalid agreement version {s:?}"))
                } else {
                    seg.parse::<u64>()
                        .map_err(|_| format!("version segment out of range in {s:?}"))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(AgreementVersion {
            text: s.to_owned(),
            segments,
        })
    }
}

impl TryFrom<String> for AgreementVersion {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<AgreementVersion> for String {
    fn from(v: AgreementVersion) -> Self {
        v.text
    }
}

impl fmt::Display for AgreementVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl PartialEq for AgreementVersion {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for AgreementVersion {}

impl PartialOrd for AgreementVersion {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for AgreementVersion {
    // Missing trailing segments count as zero: "1" == "1.0".
    fn cmp(&self, other: &Self) -> Ordering {
        let n = self.segments.len().max(other.segments.len());
        (0..n)
            .map(|i| {
                let a = self.segments.get(i).copied().unwrap_or(0);
                let b = other.segments.get(i).copied().unwrap_or(0);
                a.cmp(&b)
            })
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> AgreementVersion {
        s.parse().unwrap()
    }

    #[test]
    fn segment_wise_numeric_order() {
        assert!(v("1.01") > v("1.00"));
        assert!(v("1.10") > v("1.9"));
        assert!(v("2") > v("1.99"));
        assert_eq!(v("1.0"), v("1"));
    }

    #[test]
    fn bump_keeps_padding() {
        assert_eq!(v("1.00").bump().to_string(), "1.01");
        assert_eq!(v("1.09").bump().to_string(), "1.10");
        assert_eq!(v("3").bump().to_string(), "4");
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "1.", ".1", "1.a", "v1"] {
            assert!(bad.parse::<AgreementVersion>().is_err(), "{bad}");
        }
    }
}
