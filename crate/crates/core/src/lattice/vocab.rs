use std::collections::HashMap;

use crate::error::{Error, Result};

/// Index into a [`Vocabulary`].
pub type TokenId = u32;

/// Ordered token inventory with a designated CTC blank.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    blank_id: TokenId,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, blank_id: TokenId) -> Result<Self> {
        if (blank_id as usize) >= tokens.len() {
            return Err(Error::Vocabulary(format!(
                "blank_id {blank_id} out of range for {} tokens",
                tokens.len()
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::Vocabulary(format!("token {i} is empty")));
            }
            if index.insert(tok.clone(), i as TokenId).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Self {
            tokens,
            blank_id,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn blank_id(&self) -> TokenId {
        self.blank_id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn check(&self, id: TokenId) -> Result<()> {
        if (id as usize) < self.tokens.len() {
            Ok(())
        } else {
            Err(Error::InvalidLabel {
                label: id,
                vocab_size: self.tokens.len(),
            })
        }
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens && self.blank_id == other.blank_id
    }
}

impl Eq for Vocabulary {}
