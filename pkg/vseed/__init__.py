"""涡量播种近壁模型的二维不可压 Navier-Stokes 求解与收敛率验证包"""

__version__ = "0.1.0"
