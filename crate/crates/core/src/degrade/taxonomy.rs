use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Quality families: good, JPEG-compressed, low resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QualityKind {
    G,
    BJ,
    BL,
}

impl QualityKind {
    pub const ALL: [QualityKind; 3] = [QualityKind::G, QualityKind::BJ, QualityKind::BL];

    /// Label index used by the type network.
    pub fn index(self) -> usize {
        match self {
            QualityKind::G => 0,
            QualityKind::BJ => 1,
            QualityKind::BL => 2,
        }
    }
}

/// A quality class: `G`, or a 1-based severity level within `BJ` or `BL`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QualityClass {
    G,
    BJ(usize),
    BL(usize),
}

impl QualityClass {
    pub fn kind(&self) -> QualityKind {
        match self {
            QualityClass::G => QualityKind::G,
            QualityClass::BJ(_) => QualityKind::BJ,
            QualityClass::BL(_) => QualityKind::BL,
        }
    }

    pub fn level(&self) -> Option<usize> {
        match *self {
            QualityClass::G => None,
            QualityClass::BJ(l) | QualityClass::BL(l) => Some(l),
        }
    }

    /// Short filesystem-safe tag, e.g. `G`, `BJ03`.
    pub fn tag(&self) -> String {
        match self {
            QualityClass::G => "G".into(),
            QualityClass::BJ(l) => format!("BJ{l:02}"),
            QualityClass::BL(l) => format!("BL{l:02}"),
        }
    }
}

impl fmt::Display for QualityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QualityClass::G => write!(f, "G"),
            QualityClass::BJ(l) => write!(f, "BJ:{l}"),
            QualityClass::BL(l) => write!(f, "BL:{l}"),
        }
    }
}

/// Parses `G`, `BJ:3`, `BL:10` (the `KIND:LEVEL` command-line form).
impl FromStr for QualityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidClass(s.to_string());
        let (kind, level) = match s.split_once(':') {
            Some((k, l)) => (k, Some(l.parse::<usize>().map_err(|_| bad())?)),
            None => (s, None),
        };
        match (kind.to_ascii_uppercase().as_str(), level) {
            ("G", None) => Ok(QualityClass::G),
            ("BJ", Some(l)) if l >= 1 => Ok(QualityClass::BJ(l)),
            ("BL", Some(l)) if l >= 1 => Ok(QualityClass::BL(l)),
            _ => Err(bad()),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassRepr {
    kind: QualityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    level: Option<usize>,
}

impl Serialize for QualityClass {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ClassRepr { kind: self.kind(), level: self.level() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for QualityClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = ClassRepr::deserialize(d)?;
        match (r.kind, r.level) {
            (QualityKind::G, None) => Ok(QualityClass::G),
            (QualityKind::BJ, Some(l)) if l >= 1 => Ok(QualityClass::BJ(l)),
            (QualityKind::BL, Some(l)) if l >= 1 => Ok(QualityClass::BL(l)),
            (k, l) => Err(D::Error::custom(format!("invalid quality class {k:?} level {l:?}"))),
        }
    }
}

/// The ordered degradation ladders that define the class set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityTaxonomy {
    /// IJG quality factors, harshest last. A factor of 0 is applied as quality 1.
    pub jpeg_factors: Vec<u32>,
    /// Square side lengths for down-sampling, smallest last.
    pub downsample_sizes: Vec<usize>,
}

impl Default for QualityTaxonomy {
    fn default() -> Self {
        Self {
            jpeg_factors: vec![27, 24, 21, 18, 15, 12, 9, 6, 3, 0],
            downsample_sizes: vec![80, 72, 64, 56, 48, 40, 32, 24, 16, 8],
        }
    }
}

impl QualityTaxonomy {
    /// Five levels per family, sized for 128-pixel desk images.
    pub fn desk() -> Self {
        Self { jpeg_factors: vec![27, 21, 15, 9, 3], downsample_sizes: vec![80, 64, 48, 32, 16] }
    }

    pub fn new(jpeg_factors: Vec<u32>, downsample_sizes: Vec<usize>) -> Result<Self> {
        let t = Self { jpeg_factors, downsample_sizes };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidTaxonomy(errs.join("; ")))
        }
    }

    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.jpeg_factors.windows(2).any(|w| w[0] <= w[1]) {
            errs.push("jpeg_factors must be strictly decreasing".to_string());
        }
        if self.jpeg_factors.iter().any(|&f| f > 100) {
            errs.push("jpeg_factors must lie in 0..=100".to_string());
        }
        if self.downsample_sizes.windows(2).any(|w| w[0] <= w[1]) {
            errs.push("downsample_sizes must be strictly decreasing".to_string());
        }
        if self.downsample_sizes.contains(&0) {
            errs.push("downsample_sizes must be positive".to_string());
        }
        errs
    }

    pub fn m(&self) -> usize {
        self.jpeg_factors.len()
    }

    pub fn n(&self) -> usize {
        self.downsample_sizes.len()
    }

    pub fn class_count(&self) -> usize {
        1 + self.m() + self.n()
    }

    pub fn contains(&self, c: QualityClass) -> bool {
        match c {
            QualityClass::G => true,
            QualityClass::BJ(l) => (1..=self.m()).contains(&l),
            QualityClass::BL(l) => (1..=self.n()).contains(&l),
        }
    }

    pub fn check(&self, c: QualityClass) -> Result<()> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(Error::InvalidClass(format!("{c} (m={}, n={})", self.m(), self.n())))
        }
    }

    /// Canonical index: G, BJ_1..BJ_m, BL_1..BL_n.
    pub fn index_of(&self, c: QualityClass) -> Result<usize> {
        self.check(c)?;
        Ok(match c {
            QualityClass::G => 0,
            QualityClass::BJ(l) => l,
            QualityClass::BL(l) => self.m() + l,
        })
    }

    pub fn class_at(&self, idx: usize) -> Result<QualityClass> {
        match idx {
            0 => Ok(QualityClass::G),
            i if i <= self.m() => Ok(QualityClass::BJ(i)),
            i if i < self.class_count() => Ok(QualityClass::BL(i - self.m())),
            i => Err(Error::InvalidClass(format!("index {i} of {}", self.class_count()))),
        }
    }

    /// The IJG quality used for `BJ(level)`, with factor 0 clamped to 1.
    pub fn jpeg_quality(&self, level: usize) -> Result<i32> {
        self.check(QualityClass::BJ(level))?;
        Ok(self.jpeg_factors[level - 1].max(1) as i32)
    }

    pub fn downsample_size(&self, level: usize) -> Result<usize> {
        self.check(QualityClass::BL(level))?;
        Ok(self.downsample_sizes[level - 1])
    }

    /// Largest within-family level distance, used for cross-family mismatch.
    pub fn max_distance(&self) -> usize {
        self.m().max(self.n())
    }
}

/// All classes of `tax` in canonical order; this order indexes fused quality vectors.
pub fn enumerate_classes(tax: &QualityTaxonomy) -> Vec<QualityClass> {
    std::iter::once(QualityClass::G)
        .chain((1..=tax.m()).map(QualityClass::BJ))
        .chain((1..=tax.n()).map(QualityClass::BL))
        .collect()
}
