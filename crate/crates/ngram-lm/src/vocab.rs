use std::collections::HashMap;

/// Dense integer id of a word, assigned in first-occurrence order.
pub type WordId = u32;

/// An n-gram key: word ids oldest first, the last element is the predicted word.
pub type NgramKey = Box<[WordId]>;

pub const BEGIN_TOKEN: &str = "<s>";
pub const END_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

/// Bidirectional word-string <-> word-id mapping with reserved sentence
/// boundary tokens. Ids are dense and start at 0.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, WordId>,
    begin: Option<WordId>,
    end: Option<WordId>,
    unk: Option<WordId>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// A vocabulary pre-seeded with the sentence boundary tokens, as used for
    /// any corpus-derived model.
    pub fn with_boundaries() -> Self {
        let mut v = Self::new();
        v.begin = Some(v.intern(BEGIN_TOKEN));
        v.end = Some(v.intern(END_TOKEN));
        v
    }

    /// Interns a word, returning its id (existing or freshly assigned).
    pub fn intern(&mut self, word: &str) -> WordId {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.words.len() as WordId;
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), id);
        // Adopt reserved roles for the conventional spellings no matter how
        // the word arrived (corpus, ARPA file, hand construction).
        match word {
            BEGIN_TOKEN => self.begin = Some(id),
            END_TOKEN => self.end = Some(id),
            UNK_TOKEN => self.unk = Some(id),
            _ => {}
        }
        id
    }

    pub fn id(&self, word: &str) -> Option<WordId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: WordId) -> Option<&str> {
        self.words.get(id as usize).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains_id(&self, id: WordId) -> bool {
        (id as usize) < self.words.len()
    }

    pub fn begin(&self) -> Option<WordId> {
        self.begin
    }

    pub fn end(&self) -> Option<WordId> {
        self.end
    }

    pub fn unk(&self) -> Option<WordId> {
        self.unk
    }

    pub fn ids(&self) -> impl Iterator<Item = WordId> + '_ {
        (0..self.words.len()).map(|i| i as WordId)
    }

    /// Renders an id sequence as a space-joined string, for messages and reports.
    pub fn render(&self, key: &[WordId]) -> String {
        key.iter()
            .map(|&id| self.word(id).unwrap_or("?"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_dense_and_stable() {
        let mut v = Vocabulary::new();
        let a = v.intern("a");
        let b = v.intern("b");
        assert_eq!(a, 0);
        assert_eq!(b, 1);
        assert_eq!(v.intern("a"), 0);
        assert_eq!(v.id("b"), Some(1));
        assert_eq!(v.word(1), Some("b"));
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn boundaries_are_reserved_and_distinct() {
        let v = Vocabulary::with_boundaries();
        let begin = v.begin().unwrap();
        let end = v.end().unwrap();
        assert_ne!(begin, end);
        assert_eq!(v.word(begin), Some(BEGIN_TOKEN));
        assert_eq!(v.word(end), Some(END_TOKEN));
        assert!(v.unk().is_none());
    }

    #[test]
    fn reserved_roles_adopted_on_intern() {
        let mut v = Vocabulary::new();
        v.intern("a");
        v.intern(UNK_TOKEN);
        assert!(v.unk().is_some());
        assert_eq!(v.render(&[0, 1]), "a <unk>");
    }
}
