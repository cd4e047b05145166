"""罗盘方向纹理描述子工具包"""

__version__ = "0.1.0"
