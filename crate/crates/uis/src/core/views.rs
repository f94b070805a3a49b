//! Read-only views over the store.
//!
//! Rows are always ordered by ascending primary id so that two identical
//! queries produce identical output.

use serde::Serialize;

use super::auth::Session;
use super::error::{CoreError, CoreResult};
use super::model::{GradeValue, Role};
use super::store::{Data, Store};

/// Who may open a view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Audience {
    Anyone,
    LoggedIn,
    Only(Role),
}

/// Registered view ids with their audience.
pub const VIEWS: &[(&str, Audience)] = &[
    ("home", Audience::Anyone),
    ("login", Audience::Anyone),
    ("subject-list", Audience::Anyone),
    ("lecturer-list", Audience::Anyone),
    ("profile", Audience::LoggedIn),
    ("my-subjects", Audience::Only(Role::Student)),
    ("available-subjects", Audience::Only(Role::Student)),
    ("my-terms", Audience::Only(Role::Student)),
    ("my-grades", Audience::Only(Role::Student)),
    ("lecturer-subjects", Audience::Only(Role::Lecturer)),
    ("lecturer-terms", Audience::Only(Role::Lecturer)),
    ("term-participants", Audience::Only(Role::Lecturer)),
];

pub fn audience(view_id: &str) -> Option<Audience> {
    VIEWS.iter().find(|(id, _)| *id == view_id).map(|(_, a)| *a)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubjectRow {
    pub id: String,
    pub name: String,
    pub credits: u32,
    pub capacity: u32,
    pub enrolled: u32,
    pub lecturer_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LecturerRow {
    pub id: String,
    pub name: String,
    pub email: String,
    pub subject_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProfileData {
    pub username: String,
    pub name: String,
    pub role: Role,
    pub email: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EnrolledRow {
    pub subject_id: String,
    pub name: String,
    pub credits: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TermStatus {
    Graded,
    Registered,
    Full,
    Open,
}

impl TermStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TermStatus::Graded => "graded",
            TermStatus::Registered => "registered",
            TermStatus::Full => "full",
            TermStatus::Open => "open",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StudentTermRow {
    pub term_id: String,
    pub subject_name: String,
    pub starts_at: String,
    pub registered: u32,
    pub max_participants: u32,
    pub status: TermStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GradeRow {
    pub term_id: String,
    pub subject_name: String,
    pub starts_at: String,
    pub value: GradeValue,
    pub lecturer_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaughtSubjectRow {
    pub id: String,
    pub name: String,
    pub credits: u32,
    pub capacity: u32,
    pub enrolled: u32,
    pub term_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TermRow {
    pub term_id: String,
    pub subject_name: String,
    pub starts_at: String,
    pub registered: u32,
    pub max_participants: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParticipantRow {
    pub term_id: String,
    pub student_id: String,
    pub student_name: String,
    pub subject_name: String,
    pub starts_at: String,
    pub grade: Option<GradeValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "view", rename_all = "kebab-case")]
pub enum ViewData {
    Home {
        display_name: Option<String>,
    },
    Login,
    SubjectList {
        rows: Vec<SubjectRow>,
    },
    LecturerList {
        rows: Vec<LecturerRow>,
    },
    Profile(ProfileData),
    MySubjects {
        rows: Vec<EnrolledRow>,
        total_credits: u32,
    },
    AvailableSubjects {
        rows: Vec<SubjectRow>,
    },
    MyTerms {
        rows: Vec<StudentTermRow>,
    },
    MyGrades {
        rows: Vec<GradeRow>,
    },
    LecturerSubjects {
        rows: Vec<TaughtSubjectRow>,
    },
    LecturerTerms {
        rows: Vec<TermRow>,
        /// (id, name) of subjects the lecturer may create terms for
        subjects: Vec<(String, String)>,
    },
    TermParticipants {
        rows: Vec<ParticipantRow>,
    },
}

impl ViewData {
    pub fn view_id(&self) -> &'static str {
        match self {
            ViewData::Home { .. } => "home",
            ViewData::Login => "login",
            ViewData::SubjectList { .. } => "subject-list",
            ViewData::LecturerList { .. } => "lecturer-list",
            ViewData::Profile(_) => "profile",
            ViewData::MySubjects { .. } => "my-subjects",
            ViewData::AvailableSubjects { .. } => "available-subjects",
            ViewData::MyTerms { .. } => "my-terms",
            ViewData::MyGrades { .. } => "my-grades",
            ViewData::LecturerSubjects { .. } => "lecturer-subjects",
            ViewData::LecturerTerms { .. } => "lecturer-terms",
            ViewData::TermParticipants { .. } => "term-participants",
        }
    }
}

impl Store {
    pub fn query_view(&self, actor: Option<&Session>, view_id: &str) -> CoreResult<ViewData> {
        let audience =
            audience(view_id).ok_or_else(|| CoreError::UnknownView(view_id.to_string()))?;
        let allowed = match (audience, actor) {
            (Audience::Anyone, _) => true,
            (Audience::LoggedIn, a) => a.is_some(),
            (Audience::Only(role), Some(a)) => a.role == role,
            (Audience::Only(_), None) => false,
        };
        if !allowed {
            return Err(CoreError::Forbidden);
        }
        let data = self.lock();
        let user_id = actor.map(|a| a.user_id.as_str()).unwrap_or_default();
        if actor.is_some() && !data.users.contains_key(user_id) {
            return Err(CoreError::Forbidden);
        }
        Ok(match view_id {
            "home" => ViewData::Home {
                display_name: actor.map(|a| data.users[&a.user_id].display_name.clone()),
            },
            "login" => ViewData::Login,
            "subject-list" => ViewData::SubjectList {
                rows: subject_rows(&data, |_| true),
            },
            "lecturer-list" => ViewData::LecturerList {
                rows: lecturer_rows(&data),
            },
            "profile" => {
                let user = &data.users[user_id];
                ViewData::Profile(ProfileData {
                    username: user.username.clone(),
                    name: user.display_name.clone(),
                    role: user.role,
                    email: user.email.clone(),
                })
            }
            "my-subjects" => {
                let rows: Vec<EnrolledRow> = data
                    .subjects
                    .values()
                    .filter(|s| data.is_enrolled(user_id, &s.id))
                    .map(|s| EnrolledRow {
                        subject_id: s.id.clone(),
                        name: s.name.clone(),
                        credits: s.credits,
                    })
                    .collect();
                let total_credits = rows.iter().map(|r| r.credits).sum();
                ViewData::MySubjects {
                    rows,
                    total_credits,
                }
            }
            "available-subjects" => ViewData::AvailableSubjects {
                rows: subject_rows(&data, |id| !data.is_enrolled(user_id, id)),
            },
            "my-terms" => ViewData::MyTerms {
                rows: student_terms(&data, user_id),
            },
            "my-grades" => ViewData::MyGrades {
                rows: student_grades(&data, user_id),
            },
            "lecturer-subjects" => ViewData::LecturerSubjects {
                rows: data
                    .subjects
                    .values()
                    .filter(|s| s.lecturer_ids.iter().any(|l| l == user_id))
                    .map(|s| TaughtSubjectRow {
                        id: s.id.clone(),
                        name: s.name.clone(),
                        credits: s.credits,
                        capacity: s.capacity,
                        enrolled: data.enrolled_count(&s.id),
                        term_count: data.terms.values().filter(|t| t.subject_id == s.id).count()
                            as u32,
                    })
                    .collect(),
            },
            "lecturer-terms" => ViewData::LecturerTerms {
                rows: lecturer_terms(&data, user_id),
                subjects: data
                    .subjects
                    .values()
                    .filter(|s| s.lecturer_ids.iter().any(|l| l == user_id))
                    .map(|s| (s.id.clone(), s.name.clone()))
                    .collect(),
            },
            "term-participants" => ViewData::TermParticipants {
                rows: participants(&data, user_id),
            },
            other => return Err(CoreError::UnknownView(other.to_string())),
        })
    }
}

fn subject_rows(data: &Data, include: impl Fn(&str) -> bool) -> Vec<SubjectRow> {
    let mut rows = Vec::new();
    for subject in data.subjects.values() {
        if !include(&subject.id) {
            continue;
        }
        let mut lecturers = subject.lecturer_ids.clone();
        // @anchor: subject-lecturer-order
        lecturers.sort();
        let lecturer_names: Vec<String> = lecturers
            .iter()
            .filter_map(|id| data.users.get(id))
            .map(|u| u.display_name.clone())
            .collect();
        // @anchor: subject-row-name
        let name = subject.name.clone();
        rows.push(SubjectRow {
            id: subject.id.clone(),
            name,
            credits: subject.credits,
            capacity: subject.capacity,
            enrolled: data.enrolled_count(&subject.id),
            lecturer_names,
        });
    }
    rows
}

fn lecturer_rows(data: &Data) -> Vec<LecturerRow> {
    let mut rows = Vec::new();
    for user in data.users.values() {
        if user.role != Role::Lecturer {
            continue;
        }
        let subject_names = data
            .subjects
            .values()
            .filter(|s| s.lecturer_ids.contains(&user.id))
            .map(|s| s.name.clone())
            .collect();
        // @anchor: lecturer-row-email
        let email = user.email.clone();
        rows.push(LecturerRow {
            id: user.id.clone(),
            name: user.display_name.clone(),
            email,
            subject_names,
        });
    }
    // @anchor: lecturer-list-order
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    rows
}

/// Number of occupied seats on a term as shown to users.
fn seats_taken(data: &Data, term_id: &str) -> u32 {
    let term = &data.terms[term_id];
    // @anchor: view-seats-taken
    let registered = term.registered_student_ids.len() as u32;
    registered
}

fn student_terms(data: &Data, student_id: &str) -> Vec<StudentTermRow> {
    let mut rows = Vec::new();
    for term in data.terms.values() {
        if !data.is_enrolled(student_id, &term.subject_id) {
            continue;
        }
        let registered = seats_taken(data, &term.id);
        let is_registered = term.registered_student_ids.iter().any(|s| s == student_id);
        let graded = data
            .grades
            .contains_key(&(student_id.to_string(), term.id.clone()));
        // @anchor: term-status-full
        let full = registered >= term.max_participants;
        let status = if graded {
            TermStatus::Graded
        } else if is_registered {
            TermStatus::Registered
        } else if full {
            TermStatus::Full
        } else {
            TermStatus::Open
        };
        rows.push(StudentTermRow {
            term_id: term.id.clone(),
            subject_name: data.subjects[&term.subject_id].name.clone(),
            starts_at: term.starts_at.clone(),
            registered,
            max_participants: term.max_participants,
            status,
        });
    }
    rows
}

fn student_grades(data: &Data, student_id: &str) -> Vec<GradeRow> {
    let mut rows = Vec::new();
    for ((student, term_id), grade) in &data.grades {
        if student != student_id {
            continue;
        }
        let term = &data.terms[term_id];
        // @anchor: grade-row-lecturer
        let lecturer_name = data.users[&grade.graded_by].display_name.clone();
        rows.push(GradeRow {
            term_id: term_id.clone(),
            subject_name: data.subjects[&term.subject_id].name.clone(),
            starts_at: term.starts_at.clone(),
            value: grade.value,
            lecturer_name,
        });
    }
    rows.sort_by(|a, b| a.term_id.cmp(&b.term_id));
    rows
}

fn lecturer_terms(data: &Data, lecturer_id: &str) -> Vec<TermRow> {
    data.terms
        .values()
        .filter(|t| {
            data.subjects[&t.subject_id]
                .lecturer_ids
                .iter()
                .any(|l| l == lecturer_id)
        })
        .map(|t| TermRow {
            term_id: t.id.clone(),
            subject_name: data.subjects[&t.subject_id].name.clone(),
            starts_at: t.starts_at.clone(),
            registered: seats_taken(data, &t.id),
            max_participants: t.max_participants,
        })
        .collect()
}

fn participants(data: &Data, lecturer_id: &str) -> Vec<ParticipantRow> {
    let mut rows = Vec::new();
    for term in data.terms.values() {
        let subject = &data.subjects[&term.subject_id];
        if !subject.lecturer_ids.iter().any(|l| l == lecturer_id) {
            continue;
        }
        let mut students = term.registered_student_ids.clone();
        students.sort();
        for student_id in students {
            // @anchor: participant-grade-lookup
            let grade = data.grades.get(&(student_id.clone(), term.id.clone()));
            rows.push(ParticipantRow {
                term_id: term.id.clone(),
                student_id: student_id.clone(),
                student_name: data
                    .users
                    .get(&student_id)
                    .map(|u| u.display_name.clone())
                    .unwrap_or_default(),
                subject_name: subject.name.clone(),
                starts_at: term.starts_at.clone(),
                grade: grade.map(|g| g.value),
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::core::fixture::{shipped, SHIPPED_IDS};
    use crate::core::model::FixtureDataset;

    fn session(store: &Store, id: &str) -> Session {
        let user = store.user(id).unwrap();
        Session {
            user_id: user.id,
            role: user.role,
        }
    }

    #[test]
    fn available_subjects_is_set_difference() {
        let fixture = shipped("baseline-small").unwrap();
        let store = Store::from_fixture(&fixture).unwrap();
        for student in fixture.users.iter().filter(|u| u.role == Role::Student) {
            // brute force over the fixture: all subjects minus the student's
            let all: BTreeSet<&str> = fixture.subjects.iter().map(|s| s.id.as_str()).collect();
            let mine: BTreeSet<&str> = fixture
                .enrollments
                .iter()
                .filter(|e| e.student_id == student.id)
                .map(|e| e.subject_id.as_str())
                .collect();
            let expected: Vec<&str> = all.difference(&mine).copied().collect();
            let ViewData::AvailableSubjects { rows } = store
                .query_view(Some(&session(&store, &student.id)), "available-subjects")
                .unwrap()
            else {
                panic!("wrong view");
            };
            let got: Vec<&str> = rows.iter().map(|r| r.id.as_str()).collect();
            assert_eq!(got, expected, "{}", student.id);
        }
    }

    #[test]
    fn empty_fixture_subject_list() {
        let store = Store::from_fixture(&FixtureDataset {
            fixture_id: "empty".into(),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(
            store.query_view(None, "subject-list").unwrap(),
            ViewData::SubjectList { rows: vec![] }
        );
    }

    #[test]
    fn access_rules() {
        let store = Store::from_fixture(&shipped("baseline-small").unwrap()).unwrap();
        let student = session(&store, "st01");
        let lecturer = session(&store, "le01");
        assert_eq!(
            store.query_view(Some(&student), "term-participants"),
            Err(CoreError::Forbidden)
        );
        assert_eq!(
            store.query_view(Some(&lecturer), "my-grades"),
            Err(CoreError::Forbidden)
        );
        assert_eq!(store.query_view(None, "profile"), Err(CoreError::Forbidden));
        assert_eq!(
            store.query_view(None, "my-subjects"),
            Err(CoreError::Forbidden)
        );
        assert_eq!(
            store.query_view(None, "nope"),
            Err(CoreError::UnknownView("nope".into()))
        );
        let ghost = Session {
            user_id: "ghost".into(),
            role: Role::Student,
        };
        assert_eq!(
            store.query_view(Some(&ghost), "home"),
            Err(CoreError::Forbidden)
        );
    }

    #[test]
    fn every_view_is_deterministic() {
        for id in SHIPPED_IDS {
            let fixture = shipped(id).unwrap();
            let store = Store::from_fixture(&fixture).unwrap();
            let mut actors: Vec<Option<Session>> = vec![None];
            actors.extend(fixture.users.iter().map(|u| Some(session(&store, &u.id))));
            for actor in &actors {
                for (view, _) in VIEWS {
                    let a = store.query_view(actor.as_ref(), view);
                    let b = store.query_view(actor.as_ref(), view);
                    assert_eq!(
                        serde_json::to_string(&a.ok()).unwrap(),
                        serde_json::to_string(&b.ok()).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn student_views_on_small_fixture() {
        let store = Store::from_fixture(&shipped("baseline-small").unwrap()).unwrap();
        let st01 = session(&store, "st01");
        let ViewData::MySubjects {
            rows,
            total_credits,
        } = store.query_view(Some(&st01), "my-subjects").unwrap()
        else {
            panic!()
        };
        assert_eq!(rows.len(), 2);
        assert_eq!(total_credits, 11);

        let ViewData::MyTerms { rows } = store.query_view(Some(&st01), "my-terms").unwrap() else {
            panic!()
        };
        let statuses: Vec<(&str, TermStatus)> = rows
            .iter()
            .map(|r| (r.term_id.as_str(), r.status))
            .collect();
        assert_eq!(
            statuses,
            vec![
                ("t1", TermStatus::Registered),
                ("t2", TermStatus::Open),
                ("t3", TermStatus::Graded)
            ]
        );

        let st03 = session(&store, "st03");
        let ViewData::MyTerms { rows } = store.query_view(Some(&st03), "my-terms").unwrap() else {
            panic!()
        };
        assert_eq!(rows[0].status, TermStatus::Full);

        let ViewData::MyGrades { rows } = store.query_view(Some(&st01), "my-grades").unwrap()
        else {
            panic!()
        };
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].value, GradeValue::A);
        assert_eq!(rows[0].lecturer_name, "Karel Bily");
    }

    #[test]
    fn lecturer_views_on_small_fixture() {
        let store = Store::from_fixture(&shipped("baseline-small").unwrap()).unwrap();
        let le01 = session(&store, "le01");
        let ViewData::LecturerSubjects { rows } =
            store.query_view(Some(&le01), "lecturer-subjects").unwrap()
        else {
            panic!()
        };
        let ids: Vec<&str> = rows.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, vec!["s1", "s2"]);
        assert_eq!(rows[0].term_count, 2);

        let ViewData::LecturerTerms { rows, subjects } =
            store.query_view(Some(&le01), "lecturer-terms").unwrap()
        else {
            panic!()
        };
        assert_eq!(rows.len(), 3);
        assert_eq!(subjects.len(), 2);

        let ViewData::TermParticipants { rows } =
            store.query_view(Some(&le01), "term-participants").unwrap()
        else {
            panic!()
        };
        let keys: Vec<(&str, &str, Option<GradeValue>)> = rows
            .iter()
            .map(|r| (r.term_id.as_str(), r.student_id.as_str(), r.grade))
            .collect();
        assert_eq!(
            keys,
            vec![
                ("t1", "st01", None),
                ("t2", "st02", Some(GradeValue::B)),
                ("t3", "st01", Some(GradeValue::A))
            ]
        );
    }

    #[test]
    fn lists_for_anonymous() {
        let store = Store::from_fixture(&shipped("baseline-small").unwrap()).unwrap();
        let ViewData::SubjectList { rows } = store.query_view(None, "subject-list").unwrap() else {
            panic!()
        };
        assert_eq!(rows[1].lecturer_names, vec!["Marta Zelena", "Karel Bily"]);
        assert_eq!(rows[1].enrolled, 2);
        let ViewData::LecturerList { rows } = store.query_view(None, "lecturer-list").unwrap()
        else {
            panic!()
        };
        assert_eq!(rows[0].id, "le01");
        assert_eq!(
            rows[0].subject_names,
            vec!["Databases", "Operating Systems"]
        );
        assert_eq!(
            store.query_view(None, "home").unwrap(),
            ViewData::Home { display_name: None }
        );
        assert_eq!(store.query_view(None, "login").unwrap(), ViewData::Login);
    }

    #[test]
    fn profile_view() {
        let store = Store::from_fixture(&shipped("baseline-small").unwrap()).unwrap();
        let le02 = session(&store, "le02");
        let ViewData::Profile(p) = store.query_view(Some(&le02), "profile").unwrap() else {
            panic!()
        };
        assert_eq!(p.role, Role::Lecturer);
        assert_eq!(p.email, "karel.bily@uni.example");
    }

    #[test]
    fn view_ids_match_registry() {
        let store = Store::from_fixture(&shipped("baseline-small").unwrap()).unwrap();
        for (view, _) in VIEWS {
            let actor = match audience(view).unwrap() {
                Audience::Only(Role::Lecturer) => Some(session(&store, "le01")),
                Audience::Anyone => None,
                _ => Some(session(&store, "st01")),
            };
            let data = store.query_view(actor.as_ref(), view).unwrap();
            assert_eq!(data.view_id(), *view);
        }
        assert_eq!(TermStatus::Open.as_str(), "open");
        assert_eq!(TermStatus::Full.as_str(), "full");
    }
}
