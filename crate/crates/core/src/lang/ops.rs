//! The builtin operator table shared by the type checker and the interpreter.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Builtin {
    Zero,
    Nil,
    Just,
    Maybe,
    Cons,
    Length,
    Pair,
    Zip,
    Unzip,
    ToEnum,
    FromEnum,
    FoldMap,
    Elem,
    SequenceA,
    Sequence,
    Fmap,
    Mempty,
    Mappend,
    Compose,
    And,
    False,
}

impl Builtin {
    pub const ALL: [Builtin; 21] = [
        Builtin::Zero,
        Builtin::Nil,
        Builtin::Just,
        Builtin::Maybe,
        Builtin::Cons,
        Builtin::Length,
        Builtin::Pair,
        Builtin::Zip,
        Builtin::Unzip,
        Builtin::ToEnum,
        Builtin::FromEnum,
        Builtin::FoldMap,
        Builtin::Elem,
        Builtin::SequenceA,
        Builtin::Sequence,
        Builtin::Fmap,
        Builtin::Mempty,
        Builtin::Mappend,
        Builtin::Compose,
        Builtin::And,
        Builtin::False,
    ];

    /// The operator set used for dataset generation and experiments.
    pub const EXPERIMENT: [Builtin; 19] = [
        Builtin::Zero,
        Builtin::Nil,
        Builtin::Just,
        Builtin::Maybe,
        Builtin::Cons,
        Builtin::Length,
        Builtin::Pair,
        Builtin::Zip,
        Builtin::Unzip,
        Builtin::ToEnum,
        Builtin::FromEnum,
        Builtin::FoldMap,
        Builtin::Elem,
        Builtin::SequenceA,
        Builtin::Sequence,
        Builtin::Fmap,
        Builtin::Mempty,
        Builtin::Mappend,
        Builtin::Compose,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Zero => "zero",
            Builtin::Nil => "nil",
            Builtin::Just => "just",
            Builtin::Maybe => "maybe_",
            Builtin::Cons => "cons",
            Builtin::Length => "length",
            Builtin::Pair => "pair",
            Builtin::Zip => "zip",
            Builtin::Unzip => "unzip",
            Builtin::ToEnum => "toEnum",
            Builtin::FromEnum => "fromEnum",
            Builtin::FoldMap => "foldMap",
            Builtin::Elem => "elem",
            Builtin::SequenceA => "sequenceA",
            Builtin::Sequence => "sequence",
            Builtin::Fmap => "fmap",
            Builtin::Mempty => "mempty",
            Builtin::Mappend => "mappend",
            Builtin::Compose => "compose",
            Builtin::And => "and",
            Builtin::False => "false",
        }
    }

    /// Haskell surface names accepted by the parser.
    pub fn aliases(self) -> &'static [&'static str] {
        match self {
            Builtin::Zero => &["0"],
            Builtin::Nil => &["[]"],
            Builtin::Just => &["Just"],
            Builtin::Maybe => &["maybe"],
            Builtin::Cons => &["(:)"],
            Builtin::Pair => &["(,)"],
            Builtin::Mappend => &["(<>)"],
            Builtin::Compose => &["(.)"],
            Builtin::And => &["(&&)"],
            Builtin::False => &["False"],
            _ => &[],
        }
    }

    pub fn scheme_src(self) -> &'static str {
        match self {
            Builtin::Zero => "Int",
            Builtin::Nil => "[a]",
            Builtin::Just => "a -> Maybe a",
            Builtin::Maybe => "b -> (a -> b) -> Maybe a -> b",
            Builtin::Cons => "a -> [a] -> [a]",
            Builtin::Length => "Foldable t => t a -> Int",
            Builtin::Pair => "a -> b -> (a, b)",
            Builtin::Zip => "[a] -> [b] -> [(a, b)]",
            Builtin::Unzip => "[(a, b)] -> ([a], [b])",
            Builtin::ToEnum => "Enum a => Int -> a",
            Builtin::FromEnum => "Enum a => a -> Int",
            Builtin::FoldMap => "(Foldable t, Monoid m) => (a -> m) -> t a -> m",
            Builtin::Elem => "(Foldable t, Eq a) => a -> t a -> Bool",
            Builtin::SequenceA | Builtin::Sequence => {
                "(Traversable t, Applicative f) => t (f a) -> f (t a)"
            }
            Builtin::Fmap => "Functor f => (a -> b) -> f a -> f b",
            Builtin::Mempty => "Monoid a => a",
            Builtin::Mappend => "Semigroup a => a -> a -> a",
            Builtin::Compose => "(b -> c) -> (a -> b) -> a -> c",
            Builtin::And => "Bool -> Bool -> Bool",
            Builtin::False => "Bool",
        }
    }

    /// Number of arrows in the scheme body.
    pub fn arity(self) -> usize {
        match self {
            Builtin::Zero | Builtin::Nil | Builtin::Mempty | Builtin::False => 0,
            Builtin::Just
            | Builtin::Unzip
            | Builtin::ToEnum
            | Builtin::FromEnum
            | Builtin::Length
            | Builtin::SequenceA
            | Builtin::Sequence => 1,
            Builtin::Cons
            | Builtin::Pair
            | Builtin::Zip
            | Builtin::FoldMap
            | Builtin::Elem
            | Builtin::Fmap
            | Builtin::Mappend
            | Builtin::And => 2,
            Builtin::Maybe | Builtin::Compose => 3,
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.name() == name || b.aliases().contains(&name))
    }
}
