//! The fixed 10-class attribute taxonomy: gender (2), age (2), emotion (3), race (3).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Gender,
    Age,
    Emotion,
    Race,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::Gender, Group::Age, Group::Emotion, Group::Race];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Gender => "gender",
            Group::Age => "age",
            Group::Emotion => "emotion",
            Group::Race => "race",
        }
    }

    pub fn classes(self) -> &'static [AttributeClass] {
        use AttributeClass::*;
        match self {
            Group::Gender => &[Woman, Man],
            Group::Age => &[Young, Old],
            Group::Emotion => &[Happy, Neutral, Angry],
            Group::Race => &[Black, White, Others],
        }
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        self.classes().len()
    }

    /// Index of this group's first class in the flat 10-class ordering.
    pub fn offset(self) -> usize {
        match self {
            Group::Gender => 0,
            Group::Age => 2,
            Group::Emotion => 4,
            Group::Race => 7,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Group::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::UnknownGroup(s.to_string()))
    }
}

/// One attribute class. The discriminant is the canonical class id, which also
/// fixes the summation order of multi-term transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttributeClass {
    Woman = 0,
    Man,
    Young,
    Old,
    Happy,
    Neutral,
    Angry,
    Black,
    White,
    Others,
}

impl AttributeClass {
    pub const ALL: [AttributeClass; NUM_CLASSES] = [
        AttributeClass::Woman,
        AttributeClass::Man,
        AttributeClass::Young,
        AttributeClass::Old,
        AttributeClass::Happy,
        AttributeClass::Neutral,
        AttributeClass::Angry,
        AttributeClass::Black,
        AttributeClass::White,
        AttributeClass::Others,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        use AttributeClass::*;
        match self {
            Woman => "woman",
            Man => "man",
            Young => "young",
            Old => "old",
            Happy => "happy",
            Neutral => "neutral",
            Angry => "angry",
            Black => "black",
            White => "white",
            Others => "others",
        }
    }

    pub fn group(self) -> Group {
        match self.index() {
            0..=1 => Group::Gender,
            2..=3 => Group::Age,
            4..=6 => Group::Emotion,
            _ => Group::Race,
        }
    }

    /// Position of the class inside its group.
    pub fn position(self) -> usize {
        self.index() - self.group().offset()
    }
}

impl fmt::Display for AttributeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttributeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttributeClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

impl Serialize for AttributeClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for AttributeClass {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Serialize for Group {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Group {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_sizes_and_offsets() {
        let sizes: Vec<_> = Group::ALL.iter().map(|g| g.len()).collect();
        assert_eq!(sizes, vec![2, 2, 3, 3]);
        for g in Group::ALL {
            for (pos, c) in g.classes().iter().enumerate() {
                assert_eq!(c.group(), g);
                assert_eq!(c.position(), pos);
                assert_eq!(c.index(), g.offset() + pos);
            }
        }
    }

    #[test]
    fn names_are_unique_and_parse_back() {
        let mut names: Vec<_> = AttributeClass::ALL.iter().map(|c| c.name()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), NUM_CLASSES);
        for c in AttributeClass::ALL {
            assert_eq!(c.name().parse::<AttributeClass>().unwrap(), c);
        }
        assert!(matches!(
            "elated".parse::<AttributeClass>(),
            Err(Error::UnknownClass(_))
        ));
    }
}
