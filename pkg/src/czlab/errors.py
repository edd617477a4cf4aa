class CzlabError(RuntimeError):
    """czlab の全例外の基底クラス"""


class GridError(CzlabError):
    pass


class GridMismatchError(GridError):
    pass


class NotParaAccretiveError(CzlabError):
    pass


class UnresolvableScaleError(CzlabError):
    def __init__(self, message: str, max_k: int) -> None:
        super().__init__(f"{message} (使用可能な最大スケール k = {max_k})")
        self.max_k = max_k


class SmallAverageError(CzlabError):
    def __init__(self, k: int, location: float, value: float, floor: float) -> None:
        super().__init__(
            f"|P_k b| が下限を下回りました: k={k}, x={location:.6g}, "
            f"|P_k b|={value:.3g} < {floor:.3g}"
        )
        self.k = k
        self.location = location


class RankCollapseError(CzlabError):
    def __init__(self, rank: int, required: int) -> None:
        super().__init__(
            f"再生作用素 E の数値ランクが不足しています: {rank} < {required}。"
            "スケール範囲を広げるか格子を細かくしてください。"
        )
        self.rank = rank
        self.required = required


class FamilyMismatchError(CzlabError):
    pass


class DegenerateTripleError(CzlabError):
    pass


class HolderTripleError(CzlabError):
    pass


class DomainTooSmallError(CzlabError):
    pass


class NonConvergentSweepError(CzlabError):
    def __init__(self, message: str, tail: list[float]) -> None:
        super().__init__(f"{message} (末尾の差分: {', '.join(f'{t:.3g}' for t in tail)})")
        self.tail = tail


class MeanZeroProjectionError(CzlabError):
    pass


class BranchSafetyError(CzlabError):
    def __init__(self, triple: tuple[float, float, float]) -> None:
        super().__init__(
            "平方根の引数の実部が正ではありません: (x, y1, y2) = "
            f"({triple[0]:.6g}, {triple[1]:.6g}, {triple[2]:.6g})"
        )
        self.triple = triple


class KernelBoundError(CzlabError):
    pass


class CurveError(CzlabError):
    pass


class MissingDerivativeError(CzlabError):
    pass


class ProbeSpecError(CzlabError):
    pass


class ConfigError(CzlabError):
    pass


class InvalidArgumentError(CzlabError, ValueError):
    """列挙値や数値引数が受け付ける範囲の外にある"""
