"""Relation-conditioned encoder-decoder over cause-effect phrases:
training on graph tuples, beam-search prediction, BLEU evaluation, and
neural backward chain generation."""
