use thiserror::Error;

/// Errors raised by store operations.
///
/// Each variant has a stable kebab-case [`code`](CoreError::code) that the
/// web layer shows to users and that tests assert against.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoreError {
    #[error("invalid credentials")]
    InvalidCredentials,
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("unknown subject {0}")]
    UnknownSubject(String),
    #[error("unknown exam term {0}")]
    UnknownTerm(String),
    #[error("account is not a student")]
    NotAStudent,
    #[error("already enrolled")]
    AlreadyEnrolled,
    #[error("subject capacity exceeded")]
    CapacityExceeded,
    #[error("not enrolled")]
    NotEnrolled,
    #[error("a grade exists for the subject")]
    HasGrade,
    #[error("not enrolled in the term's subject")]
    NotEnrolledInSubject,
    #[error("exam term is full")]
    TermFull,
    #[error("already registered")]
    AlreadyRegistered,
    #[error("already graded")]
    AlreadyGraded,
    #[error("lecturer does not teach the subject")]
    NotOwner,
    #[error("capacity must be positive")]
    InvalidCapacity,
    #[error("malformed date")]
    InvalidDate,
    #[error("date lies in the past")]
    PastDate,
    #[error("student is not registered on the term")]
    NotRegisteredOnTerm,
    #[error("invalid e-mail address")]
    InvalidEmail,
    #[error("unknown view {0}")]
    UnknownView(String),
    #[error("forbidden")]
    Forbidden,
    #[error("inconsistent fixture: {0}")]
    InconsistentFixture(String),
}

impl CoreError {
    pub fn code(&self) -> &'static str {
        match self {
            CoreError::InvalidCredentials => "invalid-credentials",
            CoreError::UnknownUser(_) => "unknown-user",
            CoreError::UnknownSubject(_) => "unknown-subject",
            CoreError::UnknownTerm(_) => "unknown-term",
            CoreError::NotAStudent => "not-a-student",
            CoreError::AlreadyEnrolled => "already-enrolled",
            CoreError::CapacityExceeded => "capacity-exceeded",
            CoreError::NotEnrolled => "not-enrolled",
            CoreError::HasGrade => "has-grade",
            CoreError::NotEnrolledInSubject => "not-enrolled-in-subject",
            CoreError::TermFull => "term-full",
            CoreError::AlreadyRegistered => "already-registered",
            CoreError::AlreadyGraded => "already-graded",
            CoreError::NotOwner => "not-owner",
            CoreError::InvalidCapacity => "invalid-capacity",
            CoreError::InvalidDate => "invalid-date",
            CoreError::PastDate => "past-date",
            CoreError::NotRegisteredOnTerm => "not-registered-on-term",
            CoreError::InvalidEmail => "invalid-email",
            CoreError::UnknownView(_) => "unknown-view",
            CoreError::Forbidden => "forbidden",
            CoreError::InconsistentFixture(_) => "inconsistent-fixture",
        }
    }
}

pub type CoreResult<T> = Result<T, CoreError>;
