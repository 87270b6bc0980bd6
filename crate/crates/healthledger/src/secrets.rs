//! Passwords come from the environment or an interactive prompt, never
//! from the command line.

use std::env;
use std::io::{self, IsTerminal};

use thiserror::Error;
use zeroize::Zeroizing;

pub const PASSWORD_VAR: &str = "HEALTHLEDGER_PASSWORD";
pub const RECORD_PASSWORD_VAR: &str = "HEALTHLEDGER_RECORD_PASSWORD";

#[derive(Debug, Error)]
pub enum SecretError {
    #[error("set {0} or run from a terminal to be prompted")]
    Missing(&'static str),
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("reading password: {0}")]
    Io(#[from] io::Error),
}

pub fn password(var: &'static str, prompt: &str) -> Result<Zeroizing<String>, SecretError> {
    let value = match env::var(var) {
        Ok(v) => Zeroizing::new(v),
        Err(_) if io::stdin().is_terminal() => Zeroizing::new(rpassword::prompt_password(prompt)?),
        Err(_) => return Err(SecretError::Missing(var)),
    };
    if value.is_empty() {
        return Err(SecretError::Empty(var));
    }
    Ok(value)
}

/// Like [`password`], but returns `None` instead of prompting when `var`
/// is unset.
pub fn optional(var: &'static str) -> Result<Option<Zeroizing<String>>, SecretError> {
    match env::var(var) {
        Ok(v) if v.is_empty() => Err(SecretError::Empty(var)),
        Ok(v) => Ok(Some(Zeroizing::new(v))),
        Err(_) => Ok(None),
    }
}
