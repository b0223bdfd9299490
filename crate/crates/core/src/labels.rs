//! Prosodic-emotional label taxonomy.
//!
//! Four closed category sets. Names serialize as the lowercase strings
//! returned by `as_str`, and those strings are part of the dataset and
//! metrics file formats.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

macro_rules! category {
    ($(#[$meta:meta])* $name:ident, $field:literal, [$($variant:ident => $text:literal),+ $(,)?]) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const FIELD: &'static str = $field;

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = UnknownCategory;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(UnknownCategory { field: $field, value: s.to_string() }),
                }
            }
        }
    };
}

/// A category string outside the closed vocabulary of `field`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownCategory {
    pub field: &'static str,
    pub value: String,
}

category!(
    /// Sentence organization.
    Structure, "structure", [Statement => "statement", Question => "question", Exclamation => "exclamation"]
);
category!(
    Emotion, "emotion", [
        Neutral => "neutral",
        Happy => "happy",
        Sad => "sad",
        Angry => "angry",
        Surprised => "surprised",
    ]
);
category!(
    /// Delivery pace.
    Speed, "speed", [Slow => "slow", Normal => "normal", Fast => "fast"]
);
category!(
    /// Pitch contour.
    Tone, "tone", [Flat => "flat", Rising => "rising", Falling => "falling"]
);

/// One of the four label dimensions, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dimension {
    Structure,
    Emotion,
    Speed,
    Tone,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Structure,
        Dimension::Emotion,
        Dimension::Speed,
        Dimension::Tone,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Structure => Structure::FIELD,
            Dimension::Emotion => Emotion::FIELD,
            Dimension::Speed => Speed::FIELD,
            Dimension::Tone => Tone::FIELD,
        }
    }

    /// Number of categories in this dimension.
    pub fn size(self) -> usize {
        match self {
            Dimension::Structure => Structure::ALL.len(),
            Dimension::Emotion => Emotion::ALL.len(),
            Dimension::Speed => Speed::ALL.len(),
            Dimension::Tone => Tone::ALL.len(),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A full prosodic-emotional annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProsodyLabels {
    pub structure: Structure,
    pub emotion: Emotion,
    pub speed: Speed,
    pub tone: Tone,
}

impl ProsodyLabels {
    pub fn new(structure: Structure, emotion: Emotion, speed: Speed, tone: Tone) -> Self {
        ProsodyLabels { structure, emotion, speed, tone }
    }

    /// Category index along `dim`.
    pub fn get(&self, dim: Dimension) -> usize {
        match dim {
            Dimension::Structure => self.structure.index(),
            Dimension::Emotion => self.emotion.index(),
            Dimension::Speed => self.speed.index(),
            Dimension::Tone => self.tone.index(),
        }
    }

    /// Replaces the category along `dim`. Panics if `index` is out of range.
    pub fn set(&mut self, dim: Dimension, index: usize) {
        match dim {
            Dimension::Structure => self.structure = Structure::from_index(index).expect("structure index"),
            Dimension::Emotion => self.emotion = Emotion::from_index(index).expect("emotion index"),
            Dimension::Speed => self.speed = Speed::from_index(index).expect("speed index"),
            Dimension::Tone => self.tone = Tone::from_index(index).expect("tone index"),
        }
    }

    pub fn from_indices(idx: [usize; 4]) -> Option<Self> {
        Some(ProsodyLabels {
            structure: Structure::from_index(idx[0])?,
            emotion: Emotion::from_index(idx[1])?,
            speed: Speed::from_index(idx[2])?,
            tone: Tone::from_index(idx[3])?,
        })
    }

    /// Every label combination, 135 in total.
    pub fn all() -> impl Iterator<Item = ProsodyLabels> {
        Structure::ALL.iter().flat_map(|&s| {
            Emotion::ALL.iter().flat_map(move |&e| {
                Speed::ALL.iter().flat_map(move |&sp| {
                    Tone::ALL.iter().map(move |&t| ProsodyLabels::new(s, e, sp, t))
                })
            })
        })
    }
}

impl fmt::Display for ProsodyLabels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.structure, self.emotion, self.speed, self.tone)
    }
}
