"""
持久化工具：指标文件、布局与回合轨迹
"""
