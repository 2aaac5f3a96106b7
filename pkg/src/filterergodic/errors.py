"""Exception hierarchy.

Every error raised on purpose by the library derives from
:class:`FilterErgodicError`; the CLI maps those to exit code 1 except
:class:`ContradictoryEvidence`, which gets its own code.
"""


class FilterErgodicError(Exception):
    """Base class for domain errors."""

    code = "error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class ParseError(FilterErgodicError):
    code = "parse-error"


class ValidationError(FilterErgodicError):
    code = "validation-error"

    def __init__(self, report):
        self.report = report
        rules = ", ".join(rule for rule, _ in report.violations)
        super().__init__(f"model failed validation: {rules}")

    def to_dict(self):
        d = super().to_dict()
        d["violations"] = [
            {"rule": rule, "message": msg} for rule, msg in self.report.violations
        ]
        return d


class NotIrreducible(FilterErgodicError):
    code = "not-irreducible"


class NoConvergence(FilterErgodicError):
    code = "no-convergence"


class DimensionMismatch(FilterErgodicError, ValueError):
    code = "dimension-mismatch"


class ZeroLikelihood(FilterErgodicError):
    code = "zero-likelihood"

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"observation has zero likelihood at step {step}")

    def to_dict(self):
        d = super().to_dict()
        d["step"] = self.step
        return d


class ZeroProduct(FilterErgodicError):
    code = "zero-product"


class AtomBudgetExceeded(FilterErgodicError):
    code = "atom-budget-exceeded"


class PreconditionFailed(FilterErgodicError):
    code = "precondition-failed"


class BoundViolated(FilterErgodicError):
    code = "bound-violated"


class SupportViolation(FilterErgodicError):
    code = "support-violation"


class ContradictoryEvidence(FilterErgodicError):
    """Two certified routes disagree. This is a soundness bug."""

    code = "contradictory-evidence"
