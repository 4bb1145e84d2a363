"""
配置管理模块
默认值来自 CONFIG_SCHEMA，可由 key=value 配置文件覆盖，命令行参数最后覆盖
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from apkit.core.errors import ValidationError
from apkit.core.logger import get_logger

logger = get_logger(__name__)


@dataclass
class CompletionSettings:
    guess_rank: int = 2
    tol: float = 1e-6
    max_iters: int = 5000
    init: str = 'maskfill'
    pursuit_steps: int = 0
    escalate_rank: bool = False
    escalate_gap: float = 1e-4


@dataclass
class SparseSettings:
    sparsity: int = 10
    tol: float = 1e-6
    max_iters: int = 10000
    init: str = 'minnorm'
    seed: int = 0
    also_step_tol: bool = False


@dataclass
class BenchSettings:
    n: int = 100
    ranks: list[int] = field(default_factory=lambda: [2])
    missing_rates: list[float] = field(default_factory=lambda: [0.8])
    trials: int = 20
    seed: int = 7
    workers: int = 1
    init: str = 'or1mp'
    tol: float = 1e-6
    max_iters: int = 5000
    success_tol: float = 1e-3
    criterion: str = 'maxnorm'
    maxrank_tol: float = 1e-5
    sparse_rows: int = 128
    sparse_cols: int = 256
    s_values: list[int] = field(default_factory=lambda: list(range(10, 71, 5)))
    ensemble: str = 'gaussian'
    sparse_tol: float = 1e-3
    sparse_max_iters: int = 10000


@dataclass
class ImageSettings:
    missing_rate: float = 0.5
    rank: int = 25
    init: str = 'or1mp'
    seed: int = 0
    tol: float = 1e-4
    max_iters: int = 500


@dataclass
class LogSettings:
    console_level: str = 'INFO'
    file_level: str = 'WARNING'


class Config:
    """配置管理类 - schema 默认值 + 配置文件 + 运行时修改"""

    # key: (类型, 分类, 说明, 默认值)
    CONFIG_SCHEMA = {
        'completion.guess_rank': ('int', 'completion', '猜测秩 r_g', 2),
        'completion.tol': ('float', 'completion', '停止阈值 ‖X_{k+1}-X_k‖_F < tol', 1e-6),
        'completion.max_iters': ('int', 'completion', '最大迭代次数', 5000),
        'completion.init': ('string', 'completion', '初值 (maskfill/or1mp)', 'maskfill'),
        'completion.pursuit_steps': ('int', 'completion', 'OR1MP 步数（0=与猜测秩相同）', 0),
        'completion.escalate_rank': ('bool', 'completion', '不收敛时自动提升猜测秩', False),
        'completion.escalate_gap': ('float', 'completion', '提升秩的 ‖X*-Y*‖_F 阈值', 1e-4),
        'sparse.sparsity': ('int', 'sparse', '稀疏度 s', 10),
        'sparse.tol': ('float', 'sparse', '最小 N-s 个分量的幅值阈值', 1e-6),
        'sparse.max_iters': ('int', 'sparse', '最大迭代次数', 10000),
        'sparse.init': ('string', 'sparse', '初值 (minnorm/random)', 'minnorm'),
        'sparse.seed': ('int', 'sparse', '随机可行初值的种子', 0),
        'sparse.also_step_tol': ('bool', 'sparse', '同时要求 ‖x_{k+1}-x_k‖ < tol', False),
        'bench.n': ('int', 'bench', '矩阵阶数 n', 100),
        'bench.ranks': ('int_list', 'bench', '秩列表（与缺失率逐行配对）', [2]),
        'bench.missing_rates': ('float_list', 'bench', '缺失率列表', [0.8]),
        'bench.trials': ('int', 'bench', '每行重复次数', 20),
        'bench.seed': ('int', 'bench', '随机种子', 7),
        'bench.workers': ('int', 'bench', '并行线程数', 1),
        'bench.init': ('string', 'bench', '初值 (maskfill/or1mp)', 'or1mp'),
        'bench.tol': ('float', 'bench', 'AP 停止阈值', 1e-6),
        'bench.max_iters': ('int', 'bench', 'AP 最大迭代次数', 5000),
        'bench.success_tol': ('float', 'bench', '最大秩搜索的成功阈值', 1e-3),
        'bench.criterion': ('string', 'bench', '成功判据 (maxnorm/relfro)', 'maxnorm'),
        'bench.maxrank_tol': ('float', 'bench', '最大秩搜索中 AP 的停止阈值', 1e-5),
        'bench.sparse_rows': ('int', 'bench', '感知矩阵行数 n', 128),
        'bench.sparse_cols': ('int', 'bench', '感知矩阵列数 N', 256),
        'bench.s_values': ('range', 'bench', '稀疏度列表 a:b:step（含端点）',
                          list(range(10, 71, 5))),
        'bench.ensemble': ('string', 'bench', '随机矩阵分布 (gaussian/uniform/both)', 'gaussian'),
        'bench.sparse_tol': ('float', 'bench', '稀疏恢复成功阈值', 1e-3),
        'bench.sparse_max_iters': ('int', 'bench', '稀疏 AP 最大迭代次数', 10000),
        'image.missing_rate': ('float', 'image', '像素缺失率', 0.5),
        'image.rank': ('int', 'image', '图像补全的秩', 25),
        'image.init': ('string', 'image', '初值 (maskfill/or1mp)', 'or1mp'),
        'image.seed': ('int', 'image', '掩码随机种子', 0),
        'image.tol': ('float', 'image', 'AP 停止阈值', 1e-4),
        'image.max_iters': ('int', 'image', 'AP 最大迭代次数', 500),
        'log.console_level': ('string', 'log', '控制台日志级别', 'INFO'),
        'log.file_level': ('string', 'log', '文件日志级别', 'WARNING'),
    }

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._config_cache: dict = {}
        self._load_config()

    def _load_config(self):
        self._load_defaults_only()
        if self.path is None:
            return
        if not self.path.is_file():
            raise ValidationError(f"Config file not found: {self.path}")
        loaded = 0
        for lineno, raw in enumerate(self.path.read_text(encoding='utf-8').splitlines(), 1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ValidationError(f"{self.path}:{lineno}: expected key=value, got '{raw}'")
            key, _, value = line.partition('=')
            self.set(key.strip(), value.strip())
            loaded += 1
        logger.debug(f"Loaded {loaded} configuration items from {self.path}")

    def _load_defaults_only(self):
        for key, (_, _, _, default_value) in self.CONFIG_SCHEMA.items():
            self._config_cache[key] = list(default_value) if isinstance(default_value, list) \
                else default_value

    @staticmethod
    def coerce(value_type: str, value: Any) -> Any:
        """将字符串或原生值转换为 schema 声明的类型"""
        try:
            if value_type == 'int':
                return int(value)
            if value_type == 'float':
                return float(value)
            if value_type == 'bool':
                if isinstance(value, bool):
                    return value
                return str(value).strip().lower() in ('true', '1', 'yes', 'on')
            if value_type == 'int_list':
                return _split_list(value, int)
            if value_type == 'float_list':
                return _split_list(value, float)
            if value_type == 'range':
                return parse_range(value)
            return str(value)
        except (TypeError, ValueError) as e:
            raise ValidationError(f"Cannot convert {value!r} to {value_type}: {e}") from e

    def get(self, key: str, default: Any = None) -> Any:
        return self._config_cache.get(key, default)

    def set(self, key: str, value: Any):
        if key not in self.CONFIG_SCHEMA:
            raise ValidationError(f"Unknown config key: {key}")
        value_type = self.CONFIG_SCHEMA[key][0]
        self._config_cache[key] = self.coerce(value_type, value)

    def update(self, overrides: dict[str, Any]):
        """批量覆盖，值为 None 的项跳过（即命令行未指定）"""
        for key, value in overrides.items():
            if value is not None:
                self.set(key, value)

    def reload(self):
        self._config_cache = {}
        self._load_config()

    def _section(self, cls, prefix: str):
        kwargs = {}
        for key in self.CONFIG_SCHEMA:
            category, _, name = key.partition('.')
            if category == prefix:
                kwargs[name] = self.get(key)
        return cls(**kwargs)

    @property
    def completion(self) -> CompletionSettings:
        return self._section(CompletionSettings, 'completion')

    @property
    def sparse(self) -> SparseSettings:
        return self._section(SparseSettings, 'sparse')

    @property
    def bench(self) -> BenchSettings:
        return self._section(BenchSettings, 'bench')

    @property
    def image(self) -> ImageSettings:
        return self._section(ImageSettings, 'image')

    @property
    def log(self) -> LogSettings:
        return self._section(LogSettings, 'log')


def _split_list(value: Any, cast) -> list:
    if isinstance(value, (list, tuple)):
        return [cast(v) for v in value]
    return [cast(v) for v in str(value).split(',') if v.strip()]


def parse_range(value: Any) -> list[int]:
    """解析 'a:b:step'（含端点 b）、'a,b,c' 或单个整数"""
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    text = str(value).strip()
    if ':' not in text:
        return _split_list(text, int)
    parts = [int(p) for p in text.split(':')]
    if len(parts) == 2:
        parts.append(1)
    if len(parts) != 3 or parts[2] <= 0:
        raise ValueError(f"range must be a:b or a:b:step with step > 0, got '{text}'")
    start, stop, step = parts
    return list(range(start, stop + 1, step))


_config: Config | None = None


def get_config() -> Config:
    global _config
    if _config is None:
        _config = Config()
    return _config


def load_config(path: str | Path | None = None) -> Config:
    """重新加载全局配置（CLI 在解析参数后调用）"""
    global _config
    _config = Config(path)
    return _config
