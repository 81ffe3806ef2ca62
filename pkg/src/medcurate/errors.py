"""Exception types shared across the toolkit."""


class MedcurateError(Exception):
    """Base class for all toolkit errors."""


class MalformedRecord(MedcurateError):
    def __init__(self, line_no, reason):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class DuplicateId(MedcurateError):
    def __init__(self, id):
        self.id = id
        super().__init__(f"duplicate id: {id}")


class DimensionMismatch(MedcurateError):
    def __init__(self, id, expected, got):
        self.id = id
        self.expected = expected
        self.got = got
        super().__init__(f"embedding {id}: expected dim {expected}, got {got}")


class NonFiniteComponent(MedcurateError):
    def __init__(self, id):
        self.id = id
        super().__init__(f"embedding {id}: non-finite component")


class InvalidRecord(MedcurateError):
    def __init__(self, id, reason):
        self.id = id
        self.reason = reason
        super().__init__(f"record {id}: {reason}")


class KTooLarge(MedcurateError):
    pass


class MissingEmbedding(MedcurateError):
    def __init__(self, id, kind):
        self.id = id
        self.kind = kind
        super().__init__(f"missing {kind} embedding for {id}")


class InsufficientPool(MedcurateError):
    def __init__(self, domain, have, need):
        self.domain = domain
        self.have = have
        self.need = need
        super().__init__(f"demo pool for {domain}: have {have}, need {need}")


class TemplateError(MedcurateError):
    pass


class RateLimited(MedcurateError):
    pass


class AuthError(MedcurateError):
    pass


class Timeout(MedcurateError):
    pass


class MalformedResponse(MedcurateError):
    pass


class UnparseableRating(MedcurateError):
    pass


class UnparseableVerdict(MedcurateError):
    pass


class ShapeMismatch(MedcurateError):
    pass


class DivergenceDetected(MedcurateError):
    pass


class MissingScore(MedcurateError):
    pass


class SingleClass(MedcurateError):
    pass


class NoPositives(MedcurateError):
    pass


class EmptyReference(MedcurateError):
    def __init__(self, item_id):
        self.item_id = item_id
        super().__init__(f"empty reference answer for item {item_id}")
