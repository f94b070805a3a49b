//! Domain records of the university information system.
//!
//! Identifiers are short stable text tokens assigned by fixtures. Every
//! collection is kept ordered by ascending primary id.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Student,
    Lecturer,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Student => "student",
            Role::Lecturer => "lecturer",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GradeValue {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl GradeValue {
    pub const ALL: [GradeValue; 6] = [
        GradeValue::A,
        GradeValue::B,
        GradeValue::C,
        GradeValue::D,
        GradeValue::E,
        GradeValue::F,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GradeValue::A => "A",
            GradeValue::B => "B",
            GradeValue::C => "C",
            GradeValue::D => "D",
            GradeValue::E => "E",
            GradeValue::F => "F",
        }
    }
}

impl fmt::Display for GradeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GradeValue {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GradeValue::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAccount {
    pub id: String,
    pub username: String,
    pub password_digest: String,
    pub role: Role,
    pub display_name: String,
    pub email: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub name: String,
    pub credits: u32,
    pub capacity: u32,
    /// Ascending, every entry a lecturer account.
    pub lecturer_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamTerm {
    pub id: String,
    pub subject_id: String,
    /// `YYYY-MM-DDTHH:MM`, naive UTC.
    pub starts_at: String,
    pub max_participants: u32,
    /// Registration order.
    pub registered_student_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Enrollment {
    pub student_id: String,
    pub subject_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grade {
    pub student_id: String,
    pub exam_term_id: String,
    pub value: GradeValue,
    pub graded_by: String,
}

/// A complete, consistent snapshot of the store.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FixtureDataset {
    pub fixture_id: String,
    #[serde(default)]
    pub users: Vec<UserAccount>,
    #[serde(default)]
    pub subjects: Vec<Subject>,
    #[serde(default)]
    pub exam_terms: Vec<ExamTerm>,
    #[serde(default)]
    pub enrollments: Vec<Enrollment>,
    #[serde(default)]
    pub grades: Vec<Grade>,
}

/// Format used for exam term start times.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grade_value_parses_only_scale_letters() {
        for g in GradeValue::ALL {
            assert_eq!(g.as_str().parse::<GradeValue>(), Ok(g));
        }
        assert!("G".parse::<GradeValue>().is_err());
        assert!("a".parse::<GradeValue>().is_err());
    }

    #[test]
    fn role_display() {
        assert_eq!(Role::Student.to_string(), "student");
        assert_eq!(Role::Lecturer.to_string(), "lecturer");
    }
}
