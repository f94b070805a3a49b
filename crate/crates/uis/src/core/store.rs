//! Embedded transactional store.
//!
//! All state lives behind one mutex; every public operation locks it for
//! its whole duration, so operations are atomic with respect to each other
//! and an operation that fails leaves the state untouched.
//!
//! Lines marked `// @anchor: <name>` (and closed by `// @end: <name>`) are
//! stable seams for the defect seeder.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Mutex, MutexGuard};

use chrono::NaiveDateTime;

use super::auth::{password_digest, Session};
use super::error::{CoreError, CoreResult};
use super::fixture;
use super::model::{
    Enrollment, ExamTerm, FixtureDataset, Grade, GradeValue, Role, Subject, UserAccount,
    TIMESTAMP_FORMAT,
};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub(crate) struct Data {
    pub fixture_id: String,
    pub users: BTreeMap<String, UserAccount>,
    pub subjects: BTreeMap<String, Subject>,
    pub terms: BTreeMap<String, ExamTerm>,
    /// (student_id, subject_id)
    pub enrollments: BTreeSet<(String, String)>,
    /// keyed by (student_id, exam_term_id)
    pub grades: BTreeMap<(String, String), Grade>,
}

impl Data {
    fn from_dataset(dataset: &FixtureDataset) -> Self {
        Data {
            fixture_id: dataset.fixture_id.clone(),
            users: dataset
                .users
                .iter()
                .map(|u| (u.id.clone(), u.clone()))
                .collect(),
            subjects: dataset
                .subjects
                .iter()
                .map(|s| (s.id.clone(), s.clone()))
                .collect(),
            terms: dataset
                .exam_terms
                .iter()
                .map(|t| (t.id.clone(), t.clone()))
                .collect(),
            enrollments: dataset
                .enrollments
                .iter()
                .map(|e| (e.student_id.clone(), e.subject_id.clone()))
                .collect(),
            grades: dataset
                .grades
                .iter()
                .map(|g| ((g.student_id.clone(), g.exam_term_id.clone()), g.clone()))
                .collect(),
        }
    }

    fn to_dataset(&self) -> FixtureDataset {
        FixtureDataset {
            fixture_id: self.fixture_id.clone(),
            users: self.users.values().cloned().collect(),
            subjects: self.subjects.values().cloned().collect(),
            exam_terms: self.terms.values().cloned().collect(),
            enrollments: self
                .enrollments
                .iter()
                .map(|(student_id, subject_id)| Enrollment {
                    student_id: student_id.clone(),
                    subject_id: subject_id.clone(),
                })
                .collect(),
            grades: self.grades.values().cloned().collect(),
        }
    }

    pub fn enrolled_count(&self, subject_id: &str) -> u32 {
        self.enrollments
            .iter()
            .filter(|(_, s)| s == subject_id)
            .count() as u32
    }

    pub fn is_enrolled(&self, student_id: &str, subject_id: &str) -> bool {
        self.enrollments
            .contains(&(student_id.to_string(), subject_id.to_string()))
    }

    fn user_with_role(&self, id: &str, role: Role) -> Option<&UserAccount> {
        self.users.get(id).filter(|u| u.role == role)
    }

    fn owned_term(&self, lecturer_id: &str, term_id: &str) -> CoreResult<ExamTerm> {
        let term = self
            .terms
            .get(term_id)
            .ok_or_else(|| CoreError::UnknownTerm(term_id.to_string()))?;
        let subject = &self.subjects[&term.subject_id];
        if !subject.lecturer_ids.iter().any(|l| l == lecturer_id) {
            return Err(CoreError::NotOwner);
        }
        Ok(term.clone())
    }

    fn next_term_id(&self) -> String {
        let mut n = self.terms.len() + 1;
        loop {
            let candidate = format!("t{n}");
            if !self.terms.contains_key(&candidate) {
                return candidate;
            }
            n += 1;
        }
    }
}

#[derive(Debug, Default)]
pub struct Store {
    data: Mutex<Data>,
    clock: Mutex<Option<NaiveDateTime>>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_fixture(dataset: &FixtureDataset) -> CoreResult<Self> {
        let store = Store::new();
        store.reset_fixture(dataset)?;
        Ok(store)
    }

    pub(crate) fn lock(&self) -> MutexGuard<'_, Data> {
        self.data
            .lock()
            .unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    /// Pins the clock used for past-date checks. `None` restores wall time.
    pub fn set_clock(&self, now: Option<NaiveDateTime>) {
        *self.clock.lock().unwrap_or_else(|p| p.into_inner()) = now;
    }

    fn now(&self) -> NaiveDateTime {
        self.clock
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .unwrap_or_else(|| chrono::Utc::now().naive_utc())
    }

    /// Replaces the whole state with `dataset`. Idempotent.
    pub fn reset_fixture(&self, dataset: &FixtureDataset) -> CoreResult<()> {
        fixture::validate(dataset)?;
        let mut data = self.lock();
        *data = Data::from_dataset(dataset);
        Ok(())
    }

    pub fn dump(&self) -> FixtureDataset {
        self.lock().to_dataset()
    }

    /// Full referential-integrity audit of the current state.
    pub fn audit(&self) -> CoreResult<()> {
        fixture::validate(&self.dump())
    }

    pub fn fixture_id(&self) -> String {
        self.lock().fixture_id.clone()
    }

    pub fn user(&self, id: &str) -> Option<UserAccount> {
        self.lock().users.get(id).cloned()
    }

    /// Unknown usernames and wrong passwords yield the same error.
    pub fn authenticate(&self, username: &str, password: &str) -> CoreResult<Session> {
        let data = self.lock();
        let account = data.users.values().find(|u| u.username == username);
        // @anchor: auth-unknown-user
        let Some(account) = account else {
            return Err(CoreError::InvalidCredentials);
        };
        // @end: auth-unknown-user
        if account.password_digest != password_digest(username, password) {
            return Err(CoreError::InvalidCredentials);
        }
        Ok(Session {
            user_id: account.id.clone(),
            role: account.role,
        })
    }

    pub fn enroll_subject(&self, student_id: &str, subject_id: &str) -> CoreResult<Enrollment> {
        let mut data = self.lock();
        if data.user_with_role(student_id, Role::Student).is_none() {
            return Err(CoreError::NotAStudent);
        }
        let subject = data
            .subjects
            .get(subject_id)
            .cloned()
            .ok_or_else(|| CoreError::UnknownSubject(subject_id.to_string()))?;
        let key = (student_id.to_string(), subject_id.to_string());
        // @anchor: enroll-duplicate-check
        if data.enrollments.contains(&key) {
            return Err(CoreError::AlreadyEnrolled);
        }
        // @end: enroll-duplicate-check
        let enrolled = data.enrolled_count(subject_id);
        // @anchor: enroll-capacity-check
        if enrolled >= subject.capacity {
            return Err(CoreError::CapacityExceeded);
        }
        // @end: enroll-capacity-check
        data.enrollments.insert(key);
        Ok(Enrollment {
            student_id: student_id.to_string(),
            subject_id: subject_id.to_string(),
        })
    }

    /// Removes the enrollment together with every registration of the
    /// student on the subject's exam terms.
    pub fn cancel_enrollment(&self, student_id: &str, subject_id: &str) -> CoreResult<()> {
        let mut data = self.lock();
        if !data.is_enrolled(student_id, subject_id) {
            return Err(CoreError::NotEnrolled);
        }
        let term_ids: Vec<String> = data
            .terms
            .values()
            .filter(|t| t.subject_id == subject_id)
            .map(|t| t.id.clone())
            .collect();
        // @anchor: cancel-grade-check
        for term_id in &term_ids {
            if data
                .grades
                .contains_key(&(student_id.to_string(), term_id.clone()))
            {
                return Err(CoreError::HasGrade);
            }
        }
        // @end: cancel-grade-check
        data.enrollments
            .remove(&(student_id.to_string(), subject_id.to_string()));
        // @anchor: cancel-drop-registrations
        for term_id in &term_ids {
            if let Some(term) = data.terms.get_mut(term_id) {
                term.registered_student_ids.retain(|s| s != student_id);
            }
        }
        // @end: cancel-drop-registrations
        Ok(())
    }

    pub fn register_exam_term(&self, student_id: &str, term_id: &str) -> CoreResult<()> {
        let mut data = self.lock();
        if data.user_with_role(student_id, Role::Student).is_none() {
            return Err(CoreError::NotAStudent);
        }
        let term = data
            .terms
            .get(term_id)
            .cloned()
            .ok_or_else(|| CoreError::UnknownTerm(term_id.to_string()))?;
        let grade_key = (student_id.to_string(), term_id.to_string());
        if data.grades.contains_key(&grade_key) {
            return Err(CoreError::AlreadyGraded);
        }
        if term.registered_student_ids.iter().any(|s| s == student_id) {
            return Err(CoreError::AlreadyRegistered);
        }
        // @anchor: register-enrollment-check
        if !data.is_enrolled(student_id, &term.subject_id) {
            return Err(CoreError::NotEnrolledInSubject);
        }
        // @end: register-enrollment-check
        // @anchor: register-seats-taken
        let taken = term.registered_student_ids.len() as u32;
        // @anchor: register-capacity-check
        if taken >= term.max_participants {
            return Err(CoreError::TermFull);
        }
        // @end: register-capacity-check
        if let Some(term) = data.terms.get_mut(term_id) {
            term.registered_student_ids.push(student_id.to_string());
        }
        Ok(())
    }

    pub fn create_exam_term(
        &self,
        lecturer_id: &str,
        subject_id: &str,
        starts_at: &str,
        max_participants: i64,
    ) -> CoreResult<ExamTerm> {
        let now = self.now();
        let mut data = self.lock();
        let subject = data
            .subjects
            .get(subject_id)
            .ok_or_else(|| CoreError::UnknownSubject(subject_id.to_string()))?;
        if !subject.lecturer_ids.iter().any(|l| l == lecturer_id) {
            return Err(CoreError::NotOwner);
        }
        // @anchor: create-term-capacity-check
        if max_participants < 1 {
            return Err(CoreError::InvalidCapacity);
        }
        // @end: create-term-capacity-check
        let starts = NaiveDateTime::parse_from_str(starts_at, TIMESTAMP_FORMAT)
            .map_err(|_| CoreError::InvalidDate)?;
        // @anchor: create-term-past-check
        if starts <= now {
            return Err(CoreError::PastDate);
        }
        // @end: create-term-past-check
        let term = ExamTerm {
            id: data.next_term_id(),
            subject_id: subject_id.to_string(),
            starts_at: starts.format(TIMESTAMP_FORMAT).to_string(),
            max_participants: max_participants.min(u32::MAX as i64) as u32,
            registered_student_ids: Vec::new(),
        };
        // @anchor: create-term-persist
        data.terms.insert(term.id.clone(), term.clone());
        Ok(term)
    }

    pub fn set_grade(
        &self,
        lecturer_id: &str,
        term_id: &str,
        student_id: &str,
        value: GradeValue,
    ) -> CoreResult<Grade> {
        let mut data = self.lock();
        let term = data.owned_term(lecturer_id, term_id)?;
        // @anchor: grade-registration-check
        if !term.registered_student_ids.iter().any(|s| s == student_id) {
            return Err(CoreError::NotRegisteredOnTerm);
        }
        // @end: grade-registration-check
        if data
            .grades
            .contains_key(&(student_id.to_string(), term_id.to_string()))
        {
            return Err(CoreError::AlreadyGraded);
        }
        // @anchor: grade-target-term
        let graded_term_id = term.id.clone();
        let grade = Grade {
            student_id: student_id.to_string(),
            exam_term_id: graded_term_id,
            value,
            graded_by: lecturer_id.to_string(),
        };
        data.grades.insert(
            (grade.student_id.clone(), grade.exam_term_id.clone()),
            grade.clone(),
        );
        Ok(grade)
    }

    pub fn update_email(&self, user_id: &str, email: &str) -> CoreResult<()> {
        let mut data = self.lock();
        if !data.users.contains_key(user_id) {
            return Err(CoreError::UnknownUser(user_id.to_string()));
        }
        let email = email.trim();
        // @anchor: email-validation
        if !valid_email(email) {
            return Err(CoreError::InvalidEmail);
        }
        // @end: email-validation
        // @anchor: email-persist
        if let Some(user) = data.users.get_mut(user_id) {
            user.email = email.to_string();
        }
        // @end: email-persist
        Ok(())
    }
}

/// One `@` with non-empty local part and a dotted domain, no whitespace.
fn valid_email(email: &str) -> bool {
    let Some((local, domain)) = email.split_once('@') else {
        return false;
    };
    !local.is_empty()
        && !domain.contains('@')
        && domain.contains('.')
        && !domain.starts_with('.')
        && !domain.ends_with('.')
        && !email.chars().any(char::is_whitespace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::fixture::shipped;

    fn small() -> Store {
        let store = Store::from_fixture(&shipped("baseline-small").unwrap()).unwrap();
        store.set_clock(Some(
            NaiveDateTime::parse_from_str("2026-01-01T00:00", TIMESTAMP_FORMAT).unwrap(),
        ));
        store
    }

    fn edge() -> Store {
        Store::from_fixture(&shipped("baseline-edge").unwrap()).unwrap()
    }

    #[test]
    fn authenticate_accepts_fixture_password() {
        let store = small();
        let session = store.authenticate("st01", "st01-secret").unwrap();
        assert_eq!(session.role, Role::Student);
        assert_eq!(session.user_id, "st01");
        let lecturer = store.authenticate("le01", "le01-secret").unwrap();
        assert_eq!(lecturer.role, Role::Lecturer);
    }

    #[test]
    fn authenticate_failures_are_indistinguishable() {
        let store = small();
        let wrong_password = store.authenticate("st01", "wrong").unwrap_err();
        let unknown_user = store.authenticate("no-such-user", "x").unwrap_err();
        assert_eq!(wrong_password, CoreError::InvalidCredentials);
        assert_eq!(wrong_password, unknown_user);
        assert_eq!(wrong_password.to_string(), unknown_user.to_string());
    }

    #[test]
    fn enroll_creates_enrollment_then_rejects_duplicate() {
        let store = small();
        let e = store.enroll_subject("st04", "s1").unwrap();
        assert_eq!(e.subject_id, "s1");
        assert!(store.dump().enrollments.contains(&e));
        assert_eq!(
            store.enroll_subject("st04", "s1"),
            Err(CoreError::AlreadyEnrolled)
        );
    }

    #[test]
    fn enroll_rejects_full_subject() {
        let store = edge();
        let dump = store.dump();
        let subject = dump.subjects.iter().find(|s| s.id == "e1").unwrap();
        assert_eq!(subject.capacity, 1);
        // exhaustive recount of the fixture's enrollments for the subject
        let count = dump
            .enrollments
            .iter()
            .filter(|e| e.subject_id == "e1")
            .count();
        assert_eq!(count, 1);
        assert_eq!(
            store.enroll_subject("st10", "e1"),
            Err(CoreError::CapacityExceeded)
        );
        assert_eq!(store.dump(), dump);
    }

    #[test]
    fn enroll_requires_student_and_known_subject() {
        let store = small();
        assert_eq!(
            store.enroll_subject("le01", "s1"),
            Err(CoreError::NotAStudent)
        );
        assert_eq!(
            store.enroll_subject("ghost", "s1"),
            Err(CoreError::NotAStudent)
        );
        assert_eq!(
            store.enroll_subject("st04", "s9"),
            Err(CoreError::UnknownSubject("s9".into()))
        );
    }

    #[test]
    fn cancel_removes_dependent_registrations() {
        let store = small();
        let before = store.dump();
        assert!(before
            .exam_terms
            .iter()
            .any(|t| t.id == "t1" && t.registered_student_ids.contains(&"st01".to_string())));
        store.cancel_enrollment("st01", "s1").unwrap();
        let after = store.dump();
        assert!(!after
            .enrollments
            .iter()
            .any(|e| e.student_id == "st01" && e.subject_id == "s1"));
        for term in after.exam_terms.iter().filter(|t| t.subject_id == "s1") {
            assert!(!term.registered_student_ids.contains(&"st01".to_string()));
        }
        store.audit().unwrap();
    }

    #[test]
    fn cancel_errors_leave_state_unchanged() {
        let store = small();
        let before = store.dump();
        assert_eq!(
            store.cancel_enrollment("st04", "s1"),
            Err(CoreError::NotEnrolled)
        );
        // st01 holds grade A on t3 (subject s2)
        assert_eq!(
            store.cancel_enrollment("st01", "s2"),
            Err(CoreError::HasGrade)
        );
        assert_eq!(store.dump(), before);
    }

    #[test]
    fn register_appends_in_order() {
        let store = small();
        store.register_exam_term("st01", "t2").unwrap();
        let dump = store.dump();
        let t2 = dump.exam_terms.iter().find(|t| t.id == "t2").unwrap();
        assert_eq!(t2.registered_student_ids, vec!["st02", "st01"]);
    }

    #[test]
    fn register_error_cases() {
        let store = small();
        assert_eq!(
            store.register_exam_term("st04", "t1"),
            Err(CoreError::NotEnrolledInSubject)
        );
        assert_eq!(
            store.register_exam_term("st01", "t3"),
            Err(CoreError::AlreadyGraded)
        );
        assert_eq!(
            store.register_exam_term("st01", "t1"),
            Err(CoreError::AlreadyRegistered)
        );
        assert_eq!(
            store.register_exam_term("st01", "t9"),
            Err(CoreError::UnknownTerm("t9".into()))
        );
        assert_eq!(
            store.register_exam_term("le01", "t1"),
            Err(CoreError::NotAStudent)
        );
    }

    #[test]
    fn register_rejects_full_term() {
        let store = edge();
        assert_eq!(
            store.register_exam_term("st13", "te1"),
            Err(CoreError::TermFull)
        );
    }

    #[test]
    fn create_term_cases() {
        let store = small();
        let term = store
            .create_exam_term("le01", "s1", "2099-03-01T09:00", 10)
            .unwrap();
        assert!(term.registered_student_ids.is_empty());
        assert_eq!(term.id, "t5");
        assert_eq!(
            store.create_exam_term("le02", "s1", "2099-03-01T09:00", 10),
            Err(CoreError::NotOwner)
        );
        assert_eq!(
            store.create_exam_term("le01", "s1", "2099-03-01T09:00", 0),
            Err(CoreError::InvalidCapacity)
        );
        assert_eq!(
            store.create_exam_term("le01", "s1", "2020-03-01T09:00", 3),
            Err(CoreError::PastDate)
        );
        assert_eq!(
            store.create_exam_term("le01", "s1", "tomorrow", 3),
            Err(CoreError::InvalidDate)
        );
        assert_eq!(
            store.create_exam_term("le01", "s7", "2099-03-01T09:00", 3),
            Err(CoreError::UnknownSubject("s7".into()))
        );
    }

    #[test]
    fn term_ids_skip_taken_numbers() {
        let store = small();
        let a = store
            .create_exam_term("le01", "s1", "2099-03-01T09:00", 1)
            .unwrap();
        let b = store
            .create_exam_term("le01", "s1", "2099-03-02T09:00", 1)
            .unwrap();
        assert_eq!((a.id.as_str(), b.id.as_str()), ("t5", "t6"));
    }

    #[test]
    fn set_grade_cases() {
        let store = small();
        let grade = store
            .set_grade("le01", "t1", "st01", GradeValue::C)
            .unwrap();
        assert_eq!(grade.exam_term_id, "t1");
        assert_eq!(grade.graded_by, "le01");
        assert!(store.dump().grades.contains(&grade));
        assert_eq!(
            store.set_grade("le01", "t1", "st01", GradeValue::A),
            Err(CoreError::AlreadyGraded)
        );
        assert_eq!(
            store.set_grade("le01", "t1", "st04", GradeValue::A),
            Err(CoreError::NotRegisteredOnTerm)
        );
        assert_eq!(
            store.set_grade("le02", "t1", "st01", GradeValue::A),
            Err(CoreError::NotOwner)
        );
        assert_eq!(
            store.set_grade("le02", "t99", "st01", GradeValue::A),
            Err(CoreError::UnknownTerm("t99".into()))
        );
    }

    #[test]
    fn update_email_validates_and_persists() {
        let store = small();
        store.update_email("st01", " petr@uni.example ").unwrap();
        assert_eq!(store.user("st01").unwrap().email, "petr@uni.example");
        for bad in [
            "",
            "no-at-sign",
            "a@b",
            "@uni.example",
            "a b@uni.example",
            "a@@b.c",
        ] {
            assert_eq!(
                store.update_email("st01", bad),
                Err(CoreError::InvalidEmail),
                "{bad}"
            );
        }
        assert_eq!(
            store.update_email("ghost", "a@b.c"),
            Err(CoreError::UnknownUser("ghost".into()))
        );
    }

    #[test]
    fn reset_is_idempotent_and_round_trips() {
        for id in fixture::SHIPPED_IDS {
            let dataset = shipped(id).unwrap();
            let store = Store::new();
            store.reset_fixture(&dataset).unwrap();
            let first = store.dump();
            store.reset_fixture(&dataset).unwrap();
            assert_eq!(store.dump(), first);
            assert_eq!(first, dataset);
            assert_eq!(store.fixture_id(), *id);
        }
    }

    #[test]
    fn reset_rejects_inconsistent_dataset() {
        let mut dataset = shipped("baseline-small").unwrap();
        dataset.enrollments.push(Enrollment {
            student_id: "st04".into(),
            subject_id: "missing".into(),
        });
        let store = small();
        let before = store.dump();
        let err = store.reset_fixture(&dataset).unwrap_err();
        assert!(matches!(err, CoreError::InconsistentFixture(ref m) if m.contains("missing")));
        assert_eq!(store.dump(), before);
    }

    #[test]
    fn email_rule() {
        assert!(valid_email("x@y.z"));
        assert!(!valid_email("x@y."));
        assert!(!valid_email("x@.y"));
    }
}
