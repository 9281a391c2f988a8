# Keeps the repository root importable (modules/, utils/, artifacts/ ...) when pytest collects test/tests.
