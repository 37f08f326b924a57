# UNIF part-union implicit surface package
